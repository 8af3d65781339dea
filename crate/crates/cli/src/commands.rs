use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use otsteg::mcot::{export_key, TransportMode};
use otsteg::nn::checkpoint::{load_checkpoint, save_checkpoint};
use otsteg::nn::train::{load_dataset_dir, metrics_csv, run_ablation, train as train_model};
use otsteg::nn::{BridgeGrad, BridgeSource, EpochMetrics, LossForm, NoiseMode, TrainConfig};
use otsteg::ot::key::{read_key, write_key};
use otsteg::ot::{brute_force_plan, cost_matrix, solve_assignment, solve_entropic, solve_exact, EntropicConfig};
use otsteg::pnm::{load_rgb, save_image};
use otsteg::synthetic::toy_dataset;
use otsteg::{CostMatrix, DiscreteDistribution, ImageTensor, MetricsReport, SeededRng, TransportPlan};

use crate::config::Settings;
use crate::exit::CliError;
use crate::{AblateArgs, BenchArgs, HideArgs, RevealArgs, SolveOtArgs, TrainArgs, TrainFlags};

type Result<T> = std::result::Result<T, CliError>;

/// Seed of the generated toy set when none is given.
const DEFAULT_DATA_SEED: u64 = 2024;

fn path_flag(p: Option<PathBuf>) -> Option<String> {
    p.map(|p| p.display().to_string())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// `dir/name`, or `file` with `suffix` appended to its name.
fn sibling(file: &Path, suffix: &str) -> PathBuf {
    let mut s = file.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn parse_choice<T>(key: &str, value: &str, parse: impl Fn(&str) -> Option<T>, choices: &str) -> Result<T> {
    parse(value).ok_or_else(|| CliError::bad_input(format!("{key} must be one of {choices}, got {value:?}")))
}

fn bridge_grad_name(g: BridgeGrad) -> &'static str {
    match g {
        BridgeGrad::StraightThrough => "straight-through",
        BridgeGrad::Exact => "exact",
    }
}

fn parse_bridge_grad(s: &str) -> Option<BridgeGrad> {
    match s {
        "straight-through" => Some(BridgeGrad::StraightThrough),
        "exact" => Some(BridgeGrad::Exact),
        _ => None,
    }
}

fn resolve_train(s: &mut Settings, f: TrainFlags) -> Result<TrainConfig> {
    let d = TrainConfig::default();
    let loss_form = s.get("loss_form", f.loss_form, d.loss_form.name().to_string())?;
    let bridge_grad = s.get("bridge_grad", f.bridge_grad, bridge_grad_name(d.bridge_grad).to_string())?;
    let noise = s.get("noise", f.noise, d.noise.name().to_string())?;
    let cfg = TrainConfig {
        lr_init: s.get("lr_init", f.lr_init, d.lr_init)?,
        lr_final: s.get("lr_final", f.lr_final, d.lr_final)?,
        weight_decay: s.get("weight_decay", f.weight_decay, d.weight_decay)?,
        beta1: s.get("beta1", f.beta1, d.beta1)?,
        beta2: s.get("beta2", f.beta2, d.beta2)?,
        epochs: s.get("epochs", f.epochs, d.epochs)?,
        batch: s.get("batch", f.batch, d.batch)?,
        steps_per_epoch: s.get_opt("steps_per_epoch", f.steps_per_epoch)?,
        seed: s.get("seed", f.seed, d.seed)?,
        patch_size: s.get("patch_size", f.patch_size, d.patch_size)?,
        use_mcot: s.get("use_mcot", f.use_mcot, d.use_mcot)?,
        charbonnier_eps: s.get("charbonnier_eps", f.charbonnier_eps, d.charbonnier_eps)?,
        loss_form: parse_choice("loss_form", &loss_form, LossForm::parse, "charbonnier, literal, squared")?,
        base: s.get("base", f.base, d.base)?,
        mlp_hidden: s.get("mlp_hidden", f.mlp_hidden, d.mlp_hidden)?,
        bridge_grad: parse_choice("bridge_grad", &bridge_grad, parse_bridge_grad, "straight-through, exact")?,
        noise: parse_choice("noise", &noise, NoiseMode::parse, "fixed, per-sample")?,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Images from `--data`, or a generated toy set from `--synthetic`.
fn load_images(s: &mut Settings, data: Option<PathBuf>, synthetic: Option<usize>, data_seed: Option<u64>, patch: usize) -> Result<Vec<ImageTensor>> {
    let data = s.get_opt("data", path_flag(data))?;
    let synthetic = s.get_opt("synthetic", synthetic)?;
    let data_seed = s.get("data_seed", data_seed, DEFAULT_DATA_SEED)?;
    match (data, synthetic) {
        (Some(dir), None) => Ok(load_dataset_dir(dir, patch)?),
        (None, Some(n)) => Ok(toy_dataset(data_seed, n, patch)),
        (Some(_), Some(_)) => Err(CliError::bad_input("give either --data or --synthetic, not both")),
        (None, None) => Err(CliError::bad_input("--data is required")),
    }
}

fn report_epoch(m: &EpochMetrics, total: usize) {
    eprintln!(
        "epoch {}/{total}  L_total {:.5}  cover/stego {:.2} dB  secret/recovery {:.2} dB",
        m.epoch, m.l_total, m.psnr_cover_stego, m.psnr_secret_recovery
    );
}

pub fn hide(a: HideArgs) -> Result<()> {
    let mut s = Settings::new("hide", a.config.as_deref())?;
    let cover_path = s.require("cover", path_flag(a.cover))?;
    let secret_path = s.require("secret", path_flag(a.secret))?;
    let model_path = s.require("model", path_flag(a.model))?;
    let out_stego = PathBuf::from(s.require("out_stego", path_flag(a.out_stego))?);
    let out_key = s.get_opt("out_key", path_flag(a.out_key))?;
    let out_metrics = s.get("out_metrics", path_flag(a.out_metrics), sibling(&out_stego, ".metrics.json").display().to_string())?;
    let mode = s.get("mode", a.mode, "exact".to_string())?;
    let epsilon = s.get("epsilon", a.epsilon, 0.01)?;
    let source = s.get("bridge_source", a.bridge_source, "exact".to_string())?;
    let source = parse_choice(
        "bridge_source",
        &source,
        |v| match v {
            "exact" => Some(BridgeSource::Exact),
            "mlp" => Some(BridgeSource::Mlp),
            _ => None,
        },
        "exact, mlp",
    )?;
    let mode = match (mode.as_str(), &out_key) {
        ("exact", Some(_)) => TransportMode::Exact,
        ("exact", None) => return Err(CliError::bad_input("--out-key is required with --mode exact")),
        ("entropic", None) => TransportMode::Entropic(EntropicConfig::with_epsilon(epsilon)),
        ("entropic", Some(_)) => {
            return Err(CliError::bad_input("entropic plans are dense and cannot be written as a key; drop --out-key"))
        }
        (other, _) => return Err(CliError::bad_input(format!("mode must be exact or entropic, got {other:?}"))),
    };

    let model = load_checkpoint::<f64>(&model_path)?.model;
    let noise_seed = s.get("noise_seed", a.noise_seed, model.noise_seed())?;
    let manifest = s.finish()?;
    let cover: ImageTensor = load_rgb(&cover_path)?;
    let secret: ImageTensor = load_rgb(&secret_path)?;
    if cover.shape() != secret.shape() {
        return Err(CliError::bad_input(format!("cover is {:?} but secret is {:?}", cover.shape(), secret.shape())));
    }

    let mut out = model.hide_with(&cover, &secret, &SeededRng::new(noise_seed), source, mode)?;
    save_image(&out.stego, &out_stego)?;
    if let Some(k) = &out_key {
        export_key(&mut out.bridge, k)?;
    }
    let report = MetricsReport::compute(&cover, &out.stego)?;
    write_text(Path::new(&out_metrics), &report.to_json())?;
    write_text(&sibling(&out_stego, ".hist.csv"), &report.histogram_csv())?;
    write_text(&sibling(&out_stego, ".manifest"), &manifest)?;
    println!("psnr_y_cover_stego {}", report.psnr_y);
    println!("ssim_cover_stego {}", report.ssim);
    Ok(())
}

pub fn reveal(a: RevealArgs) -> Result<()> {
    let mut s = Settings::new("reveal", a.config.as_deref())?;
    let stego_path = s.require("stego", path_flag(a.stego))?;
    let key_path = s.get_opt("key", path_flag(a.key))?;
    let model_path = s.require("model", path_flag(a.model))?;
    let out = PathBuf::from(s.require("out", path_flag(a.out))?);
    let secret_path = s.get_opt("secret", path_flag(a.secret))?;
    let out_metrics = s.get("out_metrics", path_flag(a.out_metrics), sibling(&out, ".metrics.json").display().to_string())?;
    let manifest = s.finish()?;

    let model = load_checkpoint::<f64>(&model_path)?.model;
    let key: Option<Vec<TransportPlan>> = key_path.as_ref().map(read_key).transpose()?;
    if model.config().use_mcot && key.is_none() {
        return Err(CliError::bad_input("this model was trained with transport; --key is required"));
    }
    let stego: ImageTensor = load_rgb(&stego_path)?;
    let recovery = model.reveal(&stego, key.as_deref())?;
    save_image(&recovery, &out)?;
    if let Some(p) = secret_path {
        let secret: ImageTensor = load_rgb(&p)?;
        let report = MetricsReport::compute(&secret, &recovery)?;
        write_text(Path::new(&out_metrics), &report.to_json())?;
        write_text(&sibling(&out, ".hist.csv"), &report.histogram_csv())?;
        println!("psnr_y_secret_recovery {}", report.psnr_y);
        println!("ssim_secret_recovery {}", report.ssim);
    }
    write_text(&sibling(&out, ".manifest"), &manifest)?;
    Ok(())
}

pub fn train(a: TrainArgs) -> Result<()> {
    let mut s = Settings::new("train", a.flags.config.as_deref())?;
    let out_dir = PathBuf::from(s.require("out_dir", path_flag(a.out_dir))?);
    let resume = s.get_opt("resume", path_flag(a.resume))?;
    let (data, synthetic, data_seed) = (a.flags.data.clone(), a.flags.synthetic, a.flags.data_seed);
    let cfg = resolve_train(&mut s, a.flags)?;
    let images = load_images(&mut s, data, synthetic, data_seed, cfg.patch_size)?;
    let manifest = s.finish()?;
    let resume = resume.map(load_checkpoint::<f64>).transpose()?;

    fs::create_dir_all(&out_dir).map_err(|e| CliError::io(&out_dir, e))?;
    write_text(&out_dir.join("manifest.txt"), &manifest)?;
    let csv_path = out_dir.join("metrics.csv");
    let ckpt_path = out_dir.join("model.stgo");
    let mut history = Vec::new();
    let total = cfg.epochs;
    train_model(&images, &cfg, resume, |m, model| {
        report_epoch(m, total);
        history.push(m.clone());
        save_checkpoint(model, m.epoch, &ckpt_path)?;
        fs::write(&csv_path, metrics_csv(&history)).map_err(|e| otsteg::Error::Io { path: csv_path.clone(), source: e })
    })?;
    println!("{}", ckpt_path.display());
    Ok(())
}

fn read_points(path: &str) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(Path::new(path), e))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line
            .parse()
            .map_err(|_| CliError::bad_input(format!("{path} line {}: not a real number: {line:?}", n + 1)))?;
        if !v.is_finite() {
            return Err(CliError::bad_input(format!("{path} line {}: value is not finite", n + 1)));
        }
        out.push(v);
    }
    if out.is_empty() {
        return Err(CliError::bad_input(format!("{path}: no points")));
    }
    Ok(out)
}

fn solve(c: &CostMatrix, solver: &str, epsilon: f64) -> Result<TransportPlan> {
    Ok(match solver {
        "exact" => solve_exact(c)?,
        "assignment" => solve_assignment(&c.without_supports())?,
        "brute" => brute_force_plan(c)?,
        "entropic" => solve_entropic(c, &EntropicConfig::with_epsilon(epsilon))?,
        other => return Err(CliError::bad_input(format!("unknown solver {other:?}"))),
    })
}

fn dense_csv(plan: &TransportPlan) -> String {
    let n = plan.n();
    let mut s = String::new();
    for row in plan.to_dense().chunks(n) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

pub fn solve_ot(a: SolveOtArgs) -> Result<()> {
    let mut s = Settings::new("solve-ot", a.config.as_deref())?;
    let x_file = s.require("x_file", path_flag(a.x_file))?;
    let y_file = s.require("y_file", path_flag(a.y_file))?;
    let solver = s.get("solver", a.solver, "exact".to_string())?;
    let out = s.get_opt("out", path_flag(a.out))?;
    let epsilon_flag = s.get_opt("epsilon", a.epsilon)?;
    let manifest = s.finish()?;

    let x = DiscreteDistribution::uniform(read_points(&x_file)?)?;
    let y = DiscreteDistribution::uniform(read_points(&y_file)?)?;
    let c = cost_matrix(&x, &y)?;
    let epsilon = epsilon_flag.unwrap_or_else(|| 0.01 * c.median());
    let plan = solve(&c, &solver, epsilon)?;
    let cost = plan.total_cost().expect("solvers record their cost");
    println!("solver {solver}");
    println!("n {}", plan.n());
    if solver == "entropic" {
        println!("epsilon {epsilon:?}");
    }
    println!("total_cost {cost:?}");
    if let Some(p) = plan.as_permutation() {
        let images: Vec<String> = p.iter().map(usize::to_string).collect();
        println!("matching {}", images.join(" "));
    }
    if let Some(out) = out {
        let out = PathBuf::from(out);
        match plan.as_permutation() {
            Some(_) => write_key(std::slice::from_ref(&plan), &out)?,
            None => write_text(&out, &dense_csv(&plan))?,
        }
        write_text(&sibling(&out, ".manifest"), &manifest)?;
    }
    Ok(())
}

fn run_manifest(cfg: &TrainConfig) -> String {
    let steps = cfg.steps_per_epoch.map(|v| v.to_string()).unwrap_or_default();
    let mut s = String::from("# otsteg ablate run\n");
    let fields: [(&str, String); 17] = [
        ("base", cfg.base.to_string()),
        ("batch", cfg.batch.to_string()),
        ("beta1", cfg.beta1.to_string()),
        ("beta2", cfg.beta2.to_string()),
        ("bridge_grad", bridge_grad_name(cfg.bridge_grad).to_string()),
        ("charbonnier_eps", cfg.charbonnier_eps.to_string()),
        ("epochs", cfg.epochs.to_string()),
        ("loss_form", cfg.loss_form.name().to_string()),
        ("lr_final", cfg.lr_final.to_string()),
        ("lr_init", cfg.lr_init.to_string()),
        ("mlp_hidden", cfg.mlp_hidden.to_string()),
        ("noise", cfg.noise.name().to_string()),
        ("patch_size", cfg.patch_size.to_string()),
        ("seed", cfg.seed.to_string()),
        ("steps_per_epoch", steps),
        ("use_mcot", cfg.use_mcot.to_string()),
        ("weight_decay", cfg.weight_decay.to_string()),
    ];
    for (k, v) in fields {
        let _ = writeln!(s, "{k}={v}");
    }
    s
}

pub fn ablate(a: AblateArgs) -> Result<()> {
    let mut s = Settings::new("ablate", a.flags.config.as_deref())?;
    let seeds = s.get("seeds", a.seeds, 5)?;
    let out_dir = PathBuf::from(s.require("out_dir", path_flag(a.out_dir))?);
    let (data, synthetic, data_seed) = (a.flags.data.clone(), a.flags.synthetic, a.flags.data_seed);
    let cfg = resolve_train(&mut s, a.flags)?;
    if seeds == 0 {
        return Err(CliError::bad_input("--seeds must be at least 1"));
    }
    let images = load_images(&mut s, data, synthetic, data_seed, cfg.patch_size)?;
    let manifest = s.finish()?;

    fs::create_dir_all(&out_dir).map_err(|e| CliError::io(&out_dir, e))?;
    write_text(&out_dir.join("manifest.txt"), &manifest)?;
    let seed_list: Vec<u64> = (0..seeds as u64).map(|i| cfg.seed + i).collect();
    for &seed in &seed_list {
        for use_mcot in [true, false] {
            let run = TrainConfig { seed, use_mcot, ..cfg.clone() };
            write_text(&out_dir.join(format!("run_seed{seed}_mcot_{use_mcot}.manifest")), &run_manifest(&run))?;
        }
    }
    let report = run_ablation(&images, &cfg, &seed_list)?;
    write_text(&out_dir.join("ablation.csv"), &report.csv())?;
    println!("median_with_mcot {}", report.median_with);
    println!("median_without_mcot {}", report.median_without);
    println!("ablation {}", if report.passed() { "PASS" } else { "FAIL" });
    Ok(())
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse().map_err(|_| CliError::bad_input(format!("{key}: cannot parse {p:?}"))))
        .collect()
}

pub fn bench(a: BenchArgs) -> Result<()> {
    let mut s = Settings::new("bench", a.config.as_deref())?;
    let sizes: Vec<usize> = parse_list("sizes", &s.get("sizes", a.sizes, "64,256,1024".to_string())?)?;
    let solvers: Vec<String> = parse_list("solvers", &s.get("solvers", a.solvers, "exact".to_string())?)?;
    let scales: Vec<f64> = parse_list("epsilon_scales", &s.get("epsilon_scales", a.epsilon_scales, "1,0.1,0.01".to_string())?)?;
    let seed = s.get("seed", a.seed, 0)?;
    let out = s.get_opt("out", path_flag(a.out))?;
    let manifest = s.finish()?;
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(CliError::bad_input("sizes must be positive"));
    }
    for solver in &solvers {
        if !["exact", "assignment", "entropic", "brute"].contains(&solver.as_str()) {
            return Err(CliError::bad_input(format!("unknown solver {solver:?}")));
        }
    }
    if scales.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
        return Err(CliError::bad_input("epsilon scales must be positive"));
    }

    let mut csv = String::from("solver,n,epsilon,seconds,cost,exact_cost,gap\n");
    for &n in &sizes {
        let mut rng = SeededRng::new(seed).substream(n as u64);
        let x = DiscreteDistribution::uniform(rng.gaussian_vec(n))?;
        let y = DiscreteDistribution::uniform(rng.gaussian_vec(n))?;
        let c = cost_matrix(&x, &y)?;
        let exact = solve_exact(&c)?.total_cost().expect("exact cost");
        for solver in &solvers {
            if solver == "brute" && n > otsteg::ot::BRUTE_FORCE_MAX_N {
                eprintln!("note: brute force skipped for n = {n} (limit {})", otsteg::ot::BRUTE_FORCE_MAX_N);
                continue;
            }
            let eps_list: Vec<Option<f64>> = if solver == "entropic" {
                scales.iter().map(|k| Some(k * c.median())).collect()
            } else {
                vec![None]
            };
            for eps in eps_list {
                let start = Instant::now();
                let result = solve(&c, solver, eps.unwrap_or(0.0));
                let secs = start.elapsed().as_secs_f64();
                let eps_cell = eps.map(|e| e.to_string()).unwrap_or_default();
                match result {
                    Ok(plan) => {
                        let cost = plan.total_cost().expect("solver cost");
                        let _ = writeln!(csv, "{solver},{n},{eps_cell},{secs},{cost},{exact},{}", cost - exact);
                    }
                    Err(e) => eprintln!("note: {solver} failed for n = {n}, epsilon {eps_cell}: {e}"),
                }
            }
        }
    }
    print!("{csv}");
    if let Some(out) = out {
        let out = PathBuf::from(out);
        write_text(&out, &csv)?;
        write_text(&sibling(&out, ".manifest"), &manifest)?;
    }
    Ok(())
}
