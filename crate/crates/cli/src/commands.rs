use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use ssdr_core::data::{decode_gray, preprocess, sample_n_per_class, synth_dataset, LabeledImage, NoiseSpec, NUM_CLASSES};
use ssdr_core::experiments::{
    self, extractor_params, load_feature_cache, save_feature_cache, Arm, Context, ExperimentConfig, ExperimentKind,
    ImageSamples, ResultRecord,
};
use ssdr_core::network::{
    build_classifier, build_feature_extractor, dump_feature_maps, load_weights, save_weights,
};
use ssdr_core::training::{
    evaluate, gradient_check, init_params, train, GradCheckReport, InitMethod, TrainConfig,
};
use ssdr_core::training::gradcheck::DEFAULT_EPS;
use ssdr_core::{seeding, Error, Tensor};

use crate::args::{Command, Global, ModeArg, NoiseSide, RunOpts};
use crate::Failure;

/// Largest relative error `check` accepts.
const CHECK_TOLERANCE: f64 = 1e-2;
/// Per-layer samples for the full-network check, which is far costlier per probe.
const FULL_CHECK_SAMPLES: usize = 20;

fn arm(m: ModeArg) -> Arm {
    match m {
        ModeArg::Transfer => Arm::Transfer,
        ModeArg::Scratch => Arm::Scratch,
    }
}

fn config(kind: ExperimentKind, g: &Global, run: &RunOpts) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::new(kind);
    cfg.data = g.data.clone();
    cfg.weights = g.weights.clone();
    if !g.seeds.is_empty() {
        cfg.seeds = g.seeds.clone();
    }
    cfg.out_dir = g.out.clone();
    cfg.threads = g.threads;
    cfg.updates = g.updates;
    if !run.n.is_empty() {
        cfg.n_values = run.n.clone();
    }
    if !run.modes.is_empty() {
        cfg.arms = run.modes.iter().map(|&m| arm(m)).collect();
    }
    if let Some(a) = &run.augment {
        cfg.augmentation = a.parse()?;
    }
    if let Some(i) = &run.init {
        cfg.init = i.parse()?;
    }
    if let Some(lr) = run.lr {
        cfg.schedule.initial = lr;
    }
    let (train_side, test_side) = match run.noise_on {
        Some(NoiseSide::Train) => (true, false),
        Some(NoiseSide::Test) => (false, true),
        Some(NoiseSide::Both) | None => (true, true),
    };
    if kind == ExperimentKind::Noise {
        if !run.snr.is_empty() {
            cfg.snr_levels = run.snr.clone();
        }
        cfg.noise_train = train_side;
        cfg.noise_test = test_side;
    } else {
        match run.snr.as_slice() {
            [] => {}
            [snr_db] => {
                cfg.noise = Some(NoiseSpec {
                    snr_db: *snr_db,
                    apply_to_train: train_side,
                    apply_to_test: test_side,
                })
            }
            _ => {
                return Err(Error::InvalidArgument(
                    "several --snr values are only meaningful for the noise study".into(),
                ))
            }
        }
    }
    if let Some(n) = run.train_per_class {
        cfg.split.per_class_train = n;
    }
    if let Some(n) = run.test_per_class {
        cfg.split.per_class_test = n;
    }
    if let Some(s) = run.split_seed {
        cfg.split.seed = s;
    }
    if let Some(s) = run.extractor_seed {
        cfg.extractor_seed = s;
    }
    cfg.feature_cache = run.feature_cache.clone();
    if let Some(mb) = run.feature_memory_mb {
        cfg.feature_memory_mb = mb;
    }
    cfg.save_cell_weights = run.save_weights;
    cfg.validate()?;
    Ok(cfg)
}

fn create_out(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::data(format!("{}: {e}", dir.display())))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    std::fs::write(path, text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

pub fn run(command: Command, g: &Global) -> Result<(), Failure> {
    match command {
        Command::Extract { run } => extract(g, &run),
        Command::Train { run, features } => match features {
            Some(dir) => train_from_cache(g, &run, &dir),
            None => train_single(g, &run),
        },
        Command::Eval { run, model } => eval(g, &run, &model),
        Command::Table1 { run } => table(ExperimentKind::Table1, g, &run),
        Command::Table3 { run } => table(ExperimentKind::Table3, g, &run),
        Command::Table4 { run } => table(ExperimentKind::Table4, g, &run),
        Command::Noise { run } => table(ExperimentKind::Noise, g, &run),
        Command::Featmaps {
            image,
            pool,
            extractor_seed,
        } => featmaps(g, &image, pool, extractor_seed),
        Command::Gradhist { run, every } => gradhist(g, &run, every),
        Command::Synth { per_class } => synth(g, per_class),
        Command::Check { samples } => check(g, samples),
    }
}

fn extract(g: &Global, run: &RunOpts) -> Result<(), Failure> {
    let mut cfg = config(ExperimentKind::Single, g, run)?;
    cfg.arms = vec![Arm::Transfer];
    create_out(&cfg.out_dir)?;
    let out = cfg.out_dir.clone();
    experiments::runner::with_threads(cfg.threads, || -> Result<(), Failure> {
        let ctx = Context::new(cfg.clone())?;
        let train_set = if run.n.is_empty() {
            ctx.train_pool.clone()
        } else {
            sample_n_per_class(&ctx.train_pool, cfg.n_values[0], cfg.seeds[0])?
        };
        for (name, set) in [("features_train.ssdr", &train_set), ("features_test.ssdr", &ctx.test)] {
            let feats = ctx.features(set.images())?;
            let path = out.join(name);
            save_feature_cache(&path, &feats, &set.labels())?;
            println!("{}: {} feature maps", path.display(), set.len());
        }
        Ok(())
    })?
}

fn train_single(g: &Global, run: &RunOpts) -> Result<(), Failure> {
    let cfg = config(ExperimentKind::Single, g, run)?;
    let (record, outputs) = experiments::run_single(&cfg)?;
    print_record(&record);
    println!("record:  {}", outputs.record.display());
    println!("weights: {}", outputs.weights.display());
    println!("history: {}", outputs.history.display());
    Ok(())
}

fn train_from_cache(g: &Global, run: &RunOpts, dir: &Path) -> Result<(), Failure> {
    let cfg = config(ExperimentKind::Single, g, run)?;
    let (train_x, train_y) = load_feature_cache(&dir.join("features_train.ssdr"))?;
    let (test_x, test_y) = load_feature_cache(&dir.join("features_test.ssdr"))?;
    let seed = cfg.seeds[0];
    let spec = build_classifier();
    let tc = TrainConfig {
        max_updates: cfg.updates_for(Arm::Transfer),
        seed,
        init: cfg.init,
        schedule: cfg.schedule,
        ..TrainConfig::default()
    };
    let start = std::time::Instant::now();
    let init = init_params(&spec, cfg.init, &mut seeding::stream(seed, seeding::INIT));
    let (params, history) = train(&spec, init, &train_x, &train_y, &tc)?;
    let eval = evaluate(&spec, &params, &test_x, &test_y)?;
    let mut cell = cfg.cells().remove(0);
    cell.n = train_x.len() / NUM_CLASSES;
    let record = ResultRecord {
        config: cfg.clone(),
        cell,
        seed,
        accuracy: eval.accuracy,
        confusion: eval.confusion,
        final_train_loss: history.final_loss(experiments::runner::FINAL_LOSS_WINDOW),
        train_images: train_x.len(),
        wall_clock_secs: start.elapsed().as_secs_f64(),
        build_id: experiments::build_id(),
    };
    create_out(&cfg.out_dir)?;
    write_json(&cfg.out_dir.join("single.json"), &record)?;
    save_weights(&params, &cfg.out_dir.join("single.ssdr"))?;
    history.write_csv(&cfg.out_dir.join("single_history.csv"))?;
    print_record(&record);
    Ok(())
}

fn print_record(r: &ResultRecord) {
    println!(
        "{} seed {}: accuracy {:.4}, final training loss {:.4}, {} training images, {:.1}s",
        r.cell.id, r.seed, r.accuracy, r.final_train_loss, r.train_images, r.wall_clock_secs
    );
    for row in &r.confusion {
        let cells: Vec<String> = row.iter().map(|c| format!("{c:4}")).collect();
        println!("  {}", cells.join(" "));
    }
}

fn eval(g: &Global, run: &RunOpts, model: &Path) -> Result<(), Failure> {
    let mut cfg = config(ExperimentKind::Single, g, run)?;
    let arm = cfg.arms[0];
    if arm == Arm::Scratch {
        cfg.weights = None;
    }
    create_out(&cfg.out_dir)?;
    let out = cfg.out_dir.join("eval.json");
    experiments::runner::with_threads(cfg.threads, || -> Result<(), Failure> {
        let ctx = Context::new(cfg)?;
        let spec = match arm {
            Arm::Transfer => ctx.classifier_spec(),
            Arm::Scratch => ctx.full_spec(),
        };
        let params = load_weights(model, spec)?;
        let result = ctx.evaluate_model(arm, &params)?;
        println!("accuracy {:.4} on {} test images", result.accuracy, ctx.test.len());
        for row in &result.confusion {
            let cells: Vec<String> = row.iter().map(|c| format!("{c:4}")).collect();
            println!("  {}", cells.join(" "));
        }
        write_json(&out, &result)
    })?
}

fn table(kind: ExperimentKind, g: &Global, run: &RunOpts) -> Result<(), Failure> {
    let cfg = config(kind, g, run)?;
    let records = experiments::run_experiment(&cfg)?;
    let mut groups: Vec<(String, Vec<f64>)> = Vec::new();
    for r in &records {
        let mut key = r.cell.key_fields(kind);
        key.pop(); // seed
        let key = key.join(" ");
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r.accuracy),
            None => groups.push((key, vec![r.accuracy])),
        }
    }
    for (key, accs) in &groups {
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        println!("{key:<32} mean accuracy {mean:.4} over {} seed(s)", accs.len());
    }
    println!("{}", cfg.out_dir.join(format!("{kind}.csv")).display());
    Ok(())
}

fn featmaps(g: &Global, image: &Path, pool: u8, extractor_seed: Option<u64>) -> Result<(), Failure> {
    let mut cfg = ExperimentConfig::new(ExperimentKind::Single);
    cfg.weights = g.weights.clone();
    if let Some(s) = extractor_seed {
        cfg.extractor_seed = s;
    }
    if cfg.weights.is_none() {
        log::warn!("no --weights given: dumping maps of a random extractor");
    }
    let params = extractor_params(&cfg)?;
    let (w, h, pixels) = decode_gray(image)?;
    let img = LabeledImage::new(w, h, pixels, 0)?;
    let files = dump_feature_maps(&build_feature_extractor(), &params, &preprocess(&img), pool as usize, &g.out)?;
    println!("{} feature maps written to {}", files.len(), g.out.display());
    Ok(())
}

fn gradhist(g: &Global, run: &RunOpts, every: usize) -> Result<(), Failure> {
    let mut cfg = config(ExperimentKind::Single, g, run)?;
    cfg.arms = vec![Arm::Scratch];
    create_out(&cfg.out_dir)?;
    let out = cfg.out_dir.clone();
    let cell = cfg.cells().remove(0);
    let tc = TrainConfig {
        max_updates: cfg.updates_for(Arm::Scratch),
        seed: cell.seed,
        transfer: false,
        init: cell.init,
        schedule: cfg.schedule,
        record_grad_hist: true,
        hist_every: every.max(1),
        ..TrainConfig::default()
    };
    let history = experiments::runner::with_threads(cfg.threads, || -> Result<_, Failure> {
        let ctx = Context::new(cfg)?;
        let train_set = ctx.train_set(&cell)?;
        let spec = ctx.full_spec();
        let init = init_params(spec, cell.init, &mut seeding::stream(cell.seed, seeding::INIT));
        let (_, history) = train(spec, init, &ImageSamples(train_set.images()), &train_set.labels(), &tc)?;
        Ok(history)
    })??;
    history.write_histograms_csv(&out.join("gradhist.csv"))?;
    history.write_csv(&out.join("gradhist_history.csv"))?;
    let layers = ssdr_core::training::trainer::HIST_LAYERS;
    for layer in layers {
        let medians: Vec<f64> = history
            .histograms
            .iter()
            .filter(|h| h.layer == layer)
            .map(|h| h.median_abs)
            .collect();
        let mean = medians.iter().sum::<f64>() / medians.len().max(1) as f64;
        println!("{layer:<10} mean median |grad| {mean:.3e} over {} captures", medians.len());
    }
    println!("{}", out.join("gradhist.csv").display());
    Ok(())
}

fn synth(g: &Global, per_class: usize) -> Result<(), Failure> {
    let seed = g.seeds.first().copied().unwrap_or(0);
    let dataset = synth_dataset(per_class, seed)?;
    dataset.save_dir(&g.out)?;
    println!("{} images written to {}", dataset.len(), g.out.display());
    Ok(())
}

fn print_report(title: &str, report: &GradCheckReport) {
    println!("{title}");
    for l in &report.layers {
        println!(
            "  {:<10} max rel error {:.3e} ({} checked, {} with a reduced step, {} skipped at kinks)",
            l.layer, l.max_rel_error, l.checked, l.reduced_step, l.skipped_kinks
        );
    }
}

fn check(g: &Global, samples: usize) -> Result<(), Failure> {
    let seed = g.seeds.first().copied().unwrap_or(0);
    let head = build_classifier();
    let head_params = init_params(&head, InitMethod::Xavier, &mut seeding::stream(seed, seeding::INIT));
    let x = normal_tensor(&[2, 256, 4, 4], seed);
    let head_report = gradient_check(&head, &head_params, &x, &[1, 4], DEFAULT_EPS, samples, seed)?;
    print_report("classifier head, input 2x256x4x4", &head_report);

    let full = build_feature_extractor().concat(&head)?;
    let full_params = init_params(&full, InitMethod::Msra, &mut seeding::stream(seed, seeding::INIT));
    let x = normal_tensor(&[2, 3, 32, 32], seed.wrapping_add(1));
    let full_report = gradient_check(
        &full,
        &full_params,
        &x,
        &[0, 5],
        DEFAULT_EPS,
        samples.min(FULL_CHECK_SAMPLES),
        seed,
    )?;
    print_report("full network, input 2x3x32x32", &full_report);

    let worst = head_report.max_rel_error().max(full_report.max_rel_error());
    if worst < CHECK_TOLERANCE {
        println!("ok: max relative error {worst:.3e} < {CHECK_TOLERANCE}");
        Ok(())
    } else {
        Err(Failure::numeric(format!(
            "max relative error {worst:.3e} exceeds {CHECK_TOLERANCE}"
        )))
    }
}

/// Standard-normal tensor from the gradient-check stream.
fn normal_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = seeding::stream(seed, seeding::GRAD_CHECK);
    Tensor::from_fn(shape, |_| StandardNormal.sample(&mut rng))
}
