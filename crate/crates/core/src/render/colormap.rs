use super::RgbImage;
use crate::saliency::Heatmap;

/// Piecewise-linear RGB ramp over `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorMap {
    stops: Vec<(f32, [u8; 3])>,
}

impl ColorMap {
    /// Breakpoints must start at 0, end at 1 and strictly increase.
    pub fn new(stops: Vec<(f32, [u8; 3])>) -> crate::Result<Self> {
        let ok = stops.len() >= 2
            && stops[0].0 == 0.0
            && stops[stops.len() - 1].0 == 1.0
            && stops.windows(2).all(|w| w[0].0 < w[1].0);
        if !ok {
            return Err(crate::Error::InvalidArgument(
                "colormap breakpoints must strictly increase from 0 to 1".into(),
            ));
        }
        Ok(Self { stops })
    }

    /// Dark blue → cyan → green → yellow → dark red at t = 0, ¼, ½, ¾, 1.
    pub fn thermal() -> Self {
        Self {
            stops: vec![
                (0.0, [0, 0, 128]),
                (0.25, [0, 255, 255]),
                (0.5, [0, 255, 0]),
                (0.75, [255, 255, 0]),
                (1.0, [128, 0, 0]),
            ],
        }
    }

    pub fn stops(&self) -> &[(f32, [u8; 3])] {
        &self.stops
    }

    pub fn sample(&self, t: f32) -> [u8; 3] {
        let t = if t.is_nan() { 0.0 } else { t.clamp(0.0, 1.0) };
        let i = self.stops.partition_point(|s| s.0 <= t).clamp(1, self.stops.len() - 1);
        let (t0, c0) = self.stops[i - 1];
        let (t1, c1) = self.stops[i];
        let f = (t - t0) / (t1 - t0);
        let mut out = [0u8; 3];
        for k in 0..3 {
            let v = (1.0 - f) * c0[k] as f32 + f * c1[k] as f32;
            out[k] = v.round().clamp(0.0, 255.0) as u8;
        }
        out
    }
}

impl Default for ColorMap {
    fn default() -> Self {
        Self::thermal()
    }
}

/// Maps each heatmap cell through `cm`. Degenerate maps come out as `cm(0)`.
pub fn colorize(map: &Heatmap, cm: &ColorMap) -> RgbImage {
    let [h, w] = [map.grid.shape()[0], map.grid.shape()[1]];
    let degenerate = map.is_degenerate();
    let data = map
        .grid
        .data()
        .iter()
        .flat_map(|&v| cm.sample(if degenerate { 0.0 } else { v }))
        .collect();
    RgbImage {
        width: w,
        height: h,
        data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_breakpoints() {
        let cm = ColorMap::thermal();
        assert_eq!(cm.sample(0.0), [0, 0, 128]);
        for &(t, c) in cm.stops() {
            assert_eq!(cm.sample(t), c);
        }
        assert_eq!(cm.sample(1.0), [128, 0, 0]);
    }

    #[test]
    fn linear_midpoint() {
        let cm = ColorMap::new(vec![(0.0, [64, 0, 0]), (1.0, [0, 64, 0])]).unwrap();
        assert_eq!(cm.sample(0.5), [32, 32, 0]);
    }

    #[test]
    fn rejects_bad_breakpoints() {
        assert!(ColorMap::new(vec![(0.0, [0; 3])]).is_err());
        assert!(ColorMap::new(vec![(0.1, [0; 3]), (1.0, [0; 3])]).is_err());
        assert!(ColorMap::new(vec![(0.0, [0; 3]), (0.5, [0; 3]), (0.5, [0; 3]), (1.0, [0; 3])]).is_err());
    }

    #[test]
    fn total_on_unit_interval() {
        let cm = ColorMap::thermal();
        for i in 0..=1000 {
            cm.sample(i as f32 / 1000.0);
        }
        assert_eq!(cm.sample(f32::NAN), cm.sample(0.0));
    }
}
