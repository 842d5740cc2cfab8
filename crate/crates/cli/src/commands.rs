use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde_json::json;

use nnviz_core::data::shapes::{gen_shapes, ShapesConfig, CLASS_NAMES};
use nnviz_core::data::{idx, LabeledSet};
use nnviz_core::impressions::{self, ImpressionConfig};
use nnviz_core::mil::{highlight, reassemble, run_experiment, MilExperiment, MilTrainConfig};
use nnviz_core::nn::{checkpoint, top_k, train as fit, Model, ModelCard, ModelSpec, TrainConfig};
use nnviz_core::render::{self, ColorMap};
use nnviz_core::saliency::{explain as run_explain, ExplainParams, OcclusionConfig};
use nnviz_core::Tensor;

use crate::output::{ensure_dir, grid_csv, report, write_rgb, write_tensor, write_text};
use crate::{Arch, ExplainArgs, Failure, Global, ImpressArgs, InspectArgs, MilArgs, ServeArgs, TrainArgs};

fn load_model(path: &Path) -> Result<(Model, u32), Failure> {
    checkpoint::load_with_hash(path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

/// Class by name or index; unknown classes are usage errors listing the valid names.
fn resolve_class(model: &Model, class: &str) -> Result<usize, Failure> {
    let classes = &model.spec().classes;
    model
        .spec()
        .class_index(class)
        .or_else(|| class.parse::<usize>().ok().filter(|&i| i < classes.len()))
        .ok_or_else(|| Failure::Usage(format!("unknown class `{class}`; valid classes: {}", classes.join(", "))))
}

fn out_dir(global: &Global, out: &Option<PathBuf>) -> Result<PathBuf, Failure> {
    let dir = out.clone().unwrap_or_else(|| global.out_dir.clone());
    ensure_dir(&dir)?;
    Ok(dir)
}

fn load_data(spec: &str, n: usize, max_shapes: usize, seed: u64) -> Result<(LabeledSet, Vec<String>, [usize; 3]), Failure> {
    if spec == "shapes" {
        let cfg = ShapesConfig::new(n, seed, max_shapes);
        let images = gen_shapes(&cfg).map_err(|e| Failure::Usage(e.to_string()))?;
        let classes = CLASS_NAMES.iter().map(|s| s.to_string()).collect();
        return Ok((LabeledSet::from_shapes(&images), classes, [cfg.channels, cfg.side, cfg.side]));
    }
    let Some(prefix) = spec.strip_prefix("idx:") else {
        return Err(Failure::Usage(format!("--data must be `shapes` or `idx:<prefix>`, got `{spec}`")));
    };
    let read = |suffix: &str| -> Result<Tensor, Failure> {
        let path = format!("{prefix}-{suffix}");
        let bytes = fs::read(&path).map_err(|e| Failure::Runtime(format!("{path}: {e}")))?;
        idx::parse_idx(&bytes).map_err(|e| Failure::Runtime(format!("{path}: {e}")))
    };
    let (set, classes) = idx::labeled_set(&read("images-idx3-ubyte")?, &read("labels-idx1-ubyte")?)?;
    let shape = set.samples.first().ok_or(Failure::Runtime("dataset is empty".into()))?.pixels.shape().to_vec();
    Ok((set, classes, [shape[0], shape[1], shape[2]]))
}

pub fn train(global: &Global, a: &TrainArgs) -> Result<(), Failure> {
    let (data, classes, [c, h, w]) = load_data(&a.data, a.n, a.max_shapes, global.seed)?;
    if h != w {
        return Err(Failure::Usage(format!("images must be square, got {h}×{w}")));
    }
    let names: Vec<&str> = classes.iter().map(String::as_str).collect();
    let spec = match a.arch {
        Arch::Camnet => ModelSpec::camnet(c, h, &names),
        Arch::Fcnet => ModelSpec::fcnet(c, h, &names),
    };
    let mut model = Model::build(spec, global.seed)?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        lr: a.lr,
        batch: a.batch,
        seed: global.seed,
        ..Default::default()
    };
    let rep = fit(&mut model, &data, &cfg)?;
    let path = match &a.out {
        Some(p) => p.clone(),
        None => {
            ensure_dir(&global.out_dir)?;
            global.out_dir.join("model.nnvz")
        }
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    let crc = checkpoint::save(&model, &path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into());
    let csv = path.with_file_name(format!("{stem}_report.csv"));
    write_text(&csv, &rep.to_csv())?;
    let last = rep.epochs.last();
    report(
        global,
        &json!({
            "checkpoint": path,
            "hash": format!("{crc:08x}"),
            "report": csv,
            "epochs": rep.epochs.len(),
            "final_loss": last.map(|e| e.loss),
            "class_accuracy": last.map(|e| e.class_accuracy.clone()),
        }),
        &[
            format!("checkpoint {} ({crc:08x})", path.display()),
            format!("report {}", csv.display()),
            match last {
                Some(e) => format!("epoch {} loss {:.4} accuracy {:?}", e.epoch, e.loss, e.class_accuracy),
                None => "no epochs run".into(),
            },
        ],
    );
    Ok(())
}

pub fn explain(global: &Global, a: &ExplainArgs) -> Result<(), Failure> {
    let (model, _) = load_model(&a.model)?;
    let class = a.class.as_deref().map(|c| resolve_class(&model, c)).transpose()?;
    if !(0.0..=1.0).contains(&a.alpha) {
        return Err(Failure::Usage(format!("--alpha {} must be in [0, 1]", a.alpha)));
    }
    let bytes = fs::read(&a.image).map_err(|e| Failure::Runtime(format!("{}: {e}", a.image.display())))?;
    let pm = render::decode_any(&bytes).map_err(|e| Failure::Runtime(format!("{}: {e}", a.image.display())))?;
    let [c, h, w] = model.spec().input;
    let image = render::letterbox(&pm, c, h, w, model.spec().pixel_mean)?;
    let occlusion = match (a.patch, a.stride) {
        (None, None) => None,
        (p, s) => {
            let d = OcclusionConfig::for_model(&model);
            Some(OcclusionConfig {
                patch: p.unwrap_or(d.patch),
                stride: s.unwrap_or(d.stride),
                ..d
            })
        }
    };
    let params = ExplainParams {
        occlusion,
        layer: a.layer.clone(),
        ..Default::default()
    };
    let r = run_explain(&model, &image, a.method, class, &params)?;
    let dir = out_dir(global, &a.out)?;
    let overlay = write_rgb(&dir, "overlay", &r.overlay(&image, &ColorMap::thermal(), a.alpha)?, global.format)?;
    write_text(&dir.join("raw_grid.csv"), &grid_csv(&r.heatmap.grid))?;
    let top: Vec<_> = top_k(&r.scores, 5.min(r.scores.confidences.len()))?
        .into_iter()
        .map(|(class, confidence)| json!({"class": class, "confidence": confidence}))
        .collect();
    let (ax, ay) = r.heatmap.argmax();
    let sidecar = json!({
        "method": a.method.as_str(),
        "class": r.provenance.class,
        "class_name": r.provenance.class_name,
        "layer": r.provenance.layer,
        "resolution": r.heatmap.resolution,
        "degenerate": r.heatmap.is_degenerate(),
        "argmax": {"x": ax, "y": ay},
        "alpha": a.alpha,
        "top5": top,
        "overlay": overlay,
    });
    write_text(&dir.join("explain.json"), &serde_json::to_string_pretty(&sidecar).expect("json value"))?;
    report(
        global,
        &sidecar,
        &[format!(
            "{} for {} ({}) -> {}",
            a.method.as_str(),
            r.provenance.class_name,
            r.provenance.class,
            dir.display()
        )],
    );
    Ok(())
}

pub fn impress(global: &Global, a: &ImpressArgs) -> Result<(), Failure> {
    let (model, _) = load_model(&a.model)?;
    let class = resolve_class(&model, &a.class)?;
    let d = ImpressionConfig::default();
    let cfg = ImpressionConfig {
        iterations: a.iters.unwrap_or(d.iterations),
        tv_weight: a.tv.unwrap_or(d.tv_weight),
        step: a.step.unwrap_or(d.step),
        seed: global.seed,
        ..d
    };
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let t = impressions::impress(&model, class, &cfg)?;
    let dir = out_dir(global, &a.out)?;
    let image = write_tensor(&dir, "impression", &t.image, global.format)?;
    write_text(&dir.join("trace.csv"), &t.to_csv())?;
    let summary = json!({
        "class": class,
        "class_name": model.spec().classes[class],
        "iterations": cfg.iterations,
        "initial_logit": t.initial_logit,
        "final_logit": t.final_logit,
        "final_confidence": t.final_confidence,
        "image": image,
    });
    write_text(&dir.join("impression.json"), &serde_json::to_string_pretty(&summary).expect("json value"))?;
    report(
        global,
        &summary,
        &[format!(
            "{}: logit {:.3} -> {:.3}, confidence {:.4}, {}",
            model.spec().classes[class],
            t.initial_logit,
            t.final_logit,
            t.final_confidence,
            image.display()
        )],
    );
    Ok(())
}

pub fn mil(global: &Global, a: &MilArgs) -> Result<(), Failure> {
    let d = MilExperiment::default();
    let exp = MilExperiment {
        train_bags: a.bags,
        test_bags: a.test_bags,
        bag_size: a.bag_size,
        patch: a.patch,
        seed: global.seed,
        train: MilTrainConfig {
            epochs: a.epochs,
            lr: a.lr.unwrap_or(d.train.lr),
            ..d.train
        },
        ..d
    };
    if a.bags == 0 || a.test_bags == 0 {
        return Err(Failure::Usage("--bags and --test-bags must be >= 1".into()));
    }
    if a.patch == 0 || a.patch % 4 != 0 {
        return Err(Failure::Usage(format!("--patch {} must be a positive multiple of 4", a.patch)));
    }
    let run = run_experiment(&exp)?;
    let dir = out_dir(global, &a.out)?;
    write_text(&dir.join("amil.json"), &run.model.to_json())?;
    write_text(&dir.join("train_report.csv"), &run.report.to_csv())?;
    let metrics = json!({"experiment": exp, "evaluation": run.evaluation});
    write_text(&dir.join("metrics.json"), &serde_json::to_string_pretty(&metrics).expect("json value"))?;
    let positives = run.test_bags.iter().filter(|b| b.label >= 0.5).take(a.examples);
    for (i, bag) in positives.enumerate() {
        let attn = nnviz_core::mil::amil_forward(&run.model, bag)?.attention;
        let image = reassemble(&bag.patches, bag.grid)?;
        write_tensor(&dir, &format!("bag_{i}"), &image, global.format)?;
        write_tensor(&dir, &format!("bag_{i}_highlight"), &highlight(&image, &attn)?, global.format)?;
        write_text(&dir.join(format!("bag_{i}_attention.json")), &attn.to_json())?;
    }
    let e = &run.evaluation;
    report(
        global,
        &metrics,
        &[
            format!("bag accuracy {:.3}", e.bag_accuracy),
            format!("attention hit rate {:.3}", e.attention_hit_rate),
            format!("max |sum a - 1| {:.2e}", e.max_weight_sum_error),
            format!("outputs in {}", dir.display()),
        ],
    );
    Ok(())
}

pub fn inspect(global: &Global, a: &InspectArgs) -> Result<(), Failure> {
    let (model, crc) = load_model(&a.model)?;
    let card = ModelCard::new(&model, crc);
    report(
        global,
        &serde_json::to_value(&card).expect("card serialises"),
        &[
            format!("name {}", card.name),
            format!("architecture {}", card.architecture),
            format!("input {:?}", card.input_shape),
            format!("classes {}", card.classes.join(", ")),
            format!("capture layer {}", card.capture_layer),
            format!("parameters {}", card.parameters),
            format!("crc32 {}", card.checkpoint_hash),
        ],
    );
    Ok(())
}

pub fn serve(a: &ServeArgs) -> Result<(), Failure> {
    let config = nnviz_service::ServiceConfig {
        job_ttl: Duration::from_secs(a.job_ttl),
        static_dir: a.static_dir.clone(),
        ..Default::default()
    };
    let state = nnviz_service::AppState::load(&a.model, config).map_err(|e| Failure::Runtime(format!("{}: {e}", a.model.display())))?;
    let addr = std::net::SocketAddr::new(a.host, a.port);
    let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::Runtime(e.to_string()))?;
    eprintln!("nnviz: serving {} on http://{addr}", a.model.display());
    rt.block_on(nnviz_service::serve(state, addr)).map_err(|e| Failure::Runtime(format!("{addr}: {e}")))
}
