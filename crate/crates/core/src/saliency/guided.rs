use super::heatmap::{Heatmap, Resolution};
use crate::error::{Error, Result};
use crate::nn::Model;
use crate::tensor::{NodeId, ReluRule, Tensor};

/// Input-space saliency: gradient of logit `class` w.r.t. the image with
/// every ReLU passing only positive gradients at positive inputs.
pub fn guided_backprop(model: &Model, image: &Tensor, class: usize) -> Result<Tensor> {
    input_gradient(model, image, class, ReluRule::Guided, None)
}

/// Gradient of logit `class` w.r.t. the image under `rule`. The observer, if
/// any, sees `(relu node, incoming, outgoing)` at every ReLU crossed.
pub fn input_gradient(
    model: &Model,
    image: &Tensor,
    class: usize,
    rule: ReluRule,
    observer: Option<&mut dyn FnMut(NodeId, &Tensor, &Tensor)>,
) -> Result<Tensor> {
    model.check_class(class)?;
    let f = model.forward(image)?;
    let seed = f.logit_seed(class, 1.0);
    let mut g = f.tape.backward_with(f.logits, &seed, &[f.input], rule, observer)?;
    Ok(g.take(f.input).expect("requested").reshape(image.shape())?)
}

/// `gbp[ch, y, x] · heat[y, x]` for an input-resolution unit-range heatmap.
pub fn guided_gradcam(gradcam_up: &Heatmap, gbp: &Tensor) -> Result<Tensor> {
    let [c, h, w] = gbp.dims::<3>("guided_gradcam")?;
    if gradcam_up.height() != h || gradcam_up.width() != w {
        return Err(Error::InvalidArgument(format!(
            "heatmap {}×{} does not match saliency {h}×{w}",
            gradcam_up.height(),
            gradcam_up.width()
        )));
    }
    if gradcam_up.resolution != Resolution::Input {
        return Err(Error::InvalidArgument("guided Grad-CAM needs an input-resolution heatmap".into()));
    }
    let heat = gradcam_up.grid.data();
    let data = gbp
        .data()
        .chunks_exact(h * w)
        .take(c)
        .flat_map(|plane| plane.iter().zip(heat).map(|(g, m)| g * m))
        .collect();
    Ok(Tensor::new(vec![c, h, w], data)?)
}

/// Per-pixel maximum magnitude over channels, H × W.
pub fn magnitude_map(t: &Tensor) -> Result<Tensor> {
    let [c, h, w] = t.dims::<3>("magnitude_map")?;
    let d = t.data();
    let out = (0..h * w)
        .map(|i| (0..c).map(|ch| d[ch * h * w + i].abs()).fold(0.0f32, f32::max))
        .collect();
    Ok(Tensor::new(vec![h, w], out)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::saliency::Method;
    use crate::tensor::Tape;

    #[test]
    fn relu_gate_table() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(vec![3.0, -3.0]));
        let y = tape.relu(x).unwrap();
        let seed = Tensor::from_vec(vec![-1.0, 2.0]);
        let g = tape.backward_with(y, &seed, &[x], ReluRule::Guided, None).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[0.0, 0.0]);
        let v = tape.backward(y, &seed, &[x]).unwrap();
        assert_eq!(v.get(x).unwrap().data(), &[-1.0, 0.0]);
    }

    #[test]
    fn closed_scalar_gate() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(-2.0));
        let y = tape.relu(x).unwrap();
        let g = tape.backward_with(y, &Tensor::scalar(1.0), &[x], ReluRule::Guided, None).unwrap();
        assert_eq!(g.get(x).unwrap().item(), 0.0);
    }

    fn unit_map(v: f32, h: usize, w: usize) -> Heatmap {
        Heatmap::new(Tensor::full(&[h, w], v), Resolution::Input, Method::Gradcam, 0).unwrap()
    }

    #[test]
    fn guided_gradcam_identities() {
        let gbp = Tensor::new(vec![2, 2, 2], vec![1., -2., 3., -4., 0.5, 0.25, -1., 8.]).unwrap();
        assert!(guided_gradcam(&unit_map(0.0, 2, 2), &gbp).unwrap().data().iter().all(|&v| v == 0.0));
        assert_eq!(guided_gradcam(&unit_map(1.0, 2, 2), &gbp).unwrap(), gbp);
        let half = guided_gradcam(&unit_map(0.5, 2, 2), &gbp).unwrap();
        assert!(half.data().iter().zip(gbp.data()).all(|(o, g)| o.abs() <= g.abs()));
        assert!(guided_gradcam(&unit_map(1.0, 3, 2), &gbp).is_err());
    }

    #[test]
    fn magnitude_takes_channel_max() {
        let t = Tensor::new(vec![2, 1, 2], vec![1.0, -3.0, -2.0, 0.5]).unwrap();
        assert_eq!(magnitude_map(&t).unwrap().data(), &[2.0, 3.0]);
    }
}
