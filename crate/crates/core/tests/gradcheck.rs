mod common;

use nnviz_core::data::bags::{make_bags, BagConfig};
use nnviz_core::data::LabeledSet;
use nnviz_core::mil::{bag_gradients, instance_source, AmilConfig, AmilModel};
use nnviz_core::nn::sample_gradients;
use nnviz_core::nn::{Model, ModelSpec};
use nnviz_core::rng::SplitMix64;
use nnviz_core::Tensor;

const INSTANCES: usize = 20;

#[test]
fn every_op_matches_finite_differences() {
    for (k, op) in common::OPS.iter().enumerate() {
        let mut rng = SplitMix64::stream(7, k as u64);
        for _ in 0..INSTANCES {
            let case = common::case(op, &mut rng);
            if let Err(e) = common::check(&case, &mut rng) {
                panic!("{e}");
            }
        }
    }
}

fn image(side: usize, seed: u64) -> Tensor {
    let mut rng = SplitMix64::new(seed);
    Tensor::new(vec![1, side, side], rng.uniform_vec(side * side, 0.0, 1.0)).unwrap()
}

fn check_model(spec: ModelSpec, seed: u64) {
    let model = Model::build(spec.clone(), seed).unwrap();
    let x = image(spec.input[1], seed + 100);
    let labels = [1.0, 0.0, 1.0];
    let (_, grads, _) = sample_gradients(&model, &x, &labels).unwrap();
    let loss = |ps: &nnviz_core::tensor::ParamSet| {
        let m = Model::from_parts(spec.clone(), ps.clone()).unwrap();
        sample_gradients(&m, &x, &labels).unwrap().0
    };
    let mut rng = SplitMix64::stream(seed, 9);
    let (n, _) = common::check_params(model.params(), &grads, &loss, 6, &mut rng).unwrap();
    assert!(n > 30);
}

#[test]
fn camnet_parameter_gradients() {
    for seed in 0..2 {
        check_model(ModelSpec::camnet(1, 12, &["a", "b", "c"]), seed);
    }
}

#[test]
fn fcnet_parameter_gradients() {
    check_model(ModelSpec::fcnet(1, 12, &["a", "b", "c"]), 3);
}

#[test]
fn amil_parameter_gradients() {
    let source: LabeledSet = instance_source(40, 8, 1).unwrap();
    let cfg = BagConfig {
        positive_class: 2,
        bag_size: 4,
        positive_rate: 0.5,
        seed: 2,
    };
    let bags = make_bags(&source, &cfg, 2).unwrap();
    let model = AmilModel::build(AmilConfig::new(1, 8), 4).unwrap();
    for bag in &bags {
        let (_, grads, _) = bag_gradients(&model, bag).unwrap();
        let loss = |ps: &nnviz_core::tensor::ParamSet| {
            let mut m = model.clone();
            *m.params_mut() = ps.clone();
            bag_gradients(&m, bag).unwrap().0
        };
        let mut rng = SplitMix64::stream(5, 0);
        common::check_params(model.params(), &grads, &loss, 6, &mut rng).unwrap();
    }
}
