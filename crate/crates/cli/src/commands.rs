//! Subcommand bodies: load the scenario, run it, write the outputs.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use steplab::config::{Mode, ScenarioConfig};
use steplab::kinematics::RobotModel;
use steplab::simlab::{
    run_kinematic_walk, run_s2s_episode, summarize_s2s, write_events_csv, write_steps_csv, write_ticks_csv, EpisodeLog,
    EventKind,
};
use steplab::stepper::DeadbeatGain;
use steplab::{LipState, Side};

use crate::report::{g, percentile, Check, Report};
use crate::RunArgs;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Orbit,
    S2s,
    Walk,
}

impl Kind {
    fn mode(self) -> Mode {
        match self {
            Kind::Orbit => Mode::Orbit,
            Kind::S2s => Mode::S2s,
            Kind::Walk => Mode::Walk,
        }
    }
}

struct Loaded {
    config: ScenarioConfig,
    base_dir: PathBuf,
}

fn load(args: &RunArgs, default_mode: Mode) -> Result<Loaded> {
    let (text, base_dir) = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
            (text, dir)
        }
        None => (
            serde_json::json!({ "schema": 1, "mode": default_mode.as_str() }).to_string(),
            PathBuf::new(),
        ),
    };
    let mut overrides = args.set.clone();
    if let Some(seed) = args.seed {
        overrides.push(format!("seed={seed}"));
    }
    if args.no_adapt {
        overrides.push("s2s.adaptation.enabled=false".into());
        overrides.push("walk.adaptation.enabled=false".into());
    }
    let origin = args
        .config
        .as_ref()
        .map_or_else(|| "built-in scenario".to_string(), |p| p.display().to_string());
    let config = ScenarioConfig::parse(&text, &overrides).with_context(|| format!("invalid scenario {origin}"))?;
    config
        .validate(&base_dir)
        .with_context(|| format!("invalid scenario {origin}"))?;
    Ok(Loaded { config, base_dir })
}

/// Schema and semantic check only; prints the normalised document's mode.
pub fn validate(args: &RunArgs) -> Result<bool> {
    if args.config.is_none() {
        bail!("validate needs --config");
    }
    let loaded = load(args, Mode::Orbit)?;
    let c = &loaded.config;
    println!(
        "ok: {} scenario{}",
        c.mode.as_str(),
        c.name.as_ref().map_or(String::new(), |n| format!(" `{n}`"))
    );
    Ok(true)
}

/// Runs one experiment. `Ok(false)` means it ran but an assertion failed.
pub fn run(kind: Kind, args: &RunArgs) -> Result<bool> {
    let loaded = load(args, kind.mode())?;
    if loaded.config.mode != kind.mode() {
        bail!(
            "scenario mode is `{}` but the `{}` command was used",
            loaded.config.mode.as_str(),
            kind.mode().as_str()
        );
    }
    let out_dir = match (&args.out, &loaded.config.output) {
        (Some(dir), _) => dir.clone(),
        (None, Some(dir)) if dir.is_absolute() => dir.clone(),
        (None, Some(dir)) => loaded.base_dir.join(dir),
        (None, None) => PathBuf::from("steplab-out"),
    };
    fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;

    let mut report = Report::default();
    report.line("mode", kind.mode().as_str());
    if let Some(name) = &loaded.config.name {
        report.line("scenario", name);
    }
    let console = match kind {
        Kind::Orbit => orbit(&loaded.config, &out_dir, &mut report)?,
        Kind::S2s => s2s(&loaded.config, &out_dir, &mut report)?,
        Kind::Walk => walk(&loaded, &out_dir, &mut report)?,
    };
    let text = report.render();
    fs::write(out_dir.join("summary.txt"), &text).context("writing summary.txt")?;
    print!("{text}");
    for line in console {
        println!("{line}");
    }
    log::info!("outputs written to {}", out_dir.display());
    Ok(report.passed())
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn orbit(config: &ScenarioConfig, out_dir: &Path, report: &mut Report) -> Result<Vec<String>> {
    let settings = &config.orbit;
    let params = settings.lip.params()?;
    let sm = params.step_matrices();
    let gain = DeadbeatGain::synthesize(&sm)?;
    let (k_p, k_v) = (gain.k[(0, 0)], gain.k[(0, 1)]);
    let t_step = params.step_duration();

    let mut table = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(create(out_dir, "orbit.csv")?);
    table.write_record([
        "plane",
        "v_d",
        "target_stance",
        "lambda",
        "sigma1",
        "sigma2",
        "d2",
        "k_p",
        "k_v",
        "p_star",
        "v_star",
        "u_star",
    ])?;
    let mut traces = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(create(out_dir, "phase_portrait.csv")?);
    traces.write_record(["plane", "v_d", "stance", "step", "sample", "t", "p", "v"])?;

    let lines0 = params.orbital_lines(0.0);
    report.line("lambda", g(params.lambda()));
    report.line("sigma1", g(lines0.sigma1));
    report.line("sigma2", g(lines0.sigma2));
    report.line("K", format!("[{}, {}]", g(k_p), g(k_v)));

    let mut sample = |plane: &str, v_d: f64, stance: Side, step: usize, start: LipState| -> Result<()> {
        for i in 0..settings.samples {
            let t = t_step * i as f64 / (settings.samples - 1) as f64;
            let x = params.flow(start, t);
            traces.write_record([
                plane.to_string(),
                num(v_d),
                stance.as_str().to_string(),
                step.to_string(),
                i.to_string(),
                num(t),
                num(x.p),
                num(x.v),
            ])?;
        }
        Ok(())
    };

    for &v in &settings.velocities_x {
        let target = params.p1_target(v);
        table.write_record([
            "sagittal".to_string(),
            num(v),
            String::new(),
            num(params.lambda()),
            num(lines0.sigma1),
            num(lines0.sigma2),
            num(0.0),
            num(k_p),
            num(k_v),
            num(target.x_star.p),
            num(target.x_star.v),
            num(target.u_star),
        ])?;
        report.line(
            format!("sagittal v_x_d={}", g(v)),
            format!(
                "x_star=({}, {}) u_star={}",
                g(target.x_star.p),
                g(target.x_star.v),
                g(target.u_star)
            ),
        );
        let start = LipState::new(target.x_star.p - target.u_star, target.x_star.v);
        sample("sagittal", v, Side::Right, 0, start)?;
    }

    for &v in &settings.velocities_y {
        let lines = params.orbital_lines(v);
        let targets = params.p2_targets(v, settings.u_left_star);
        for (stance, target) in [(Side::Right, targets.left), (Side::Left, targets.right)] {
            table.write_record([
                "frontal".to_string(),
                num(v),
                stance.as_str().to_string(),
                num(params.lambda()),
                num(lines.sigma1),
                num(lines.sigma2),
                num(lines.d2),
                num(k_p),
                num(k_v),
                num(target.x_star.p),
                num(target.x_star.v),
                num(target.u_star),
            ])?;
        }
        report.line(
            format!("frontal v_y_d={}", g(v)),
            format!(
                "d2={} u_left_star={} u_right_star={}",
                g(lines.d2),
                g(targets.left.u_star),
                g(targets.right.u_star)
            ),
        );
        // Right stance starts from the reset of the right-landing step, then lands left.
        let right_start = LipState::new(targets.right.x_star.p - targets.right.u_star, targets.right.x_star.v);
        sample("frontal", v, Side::Right, 0, right_start)?;
        let left_start = LipState::new(targets.left.x_star.p - targets.left.u_star, targets.left.x_star.v);
        sample("frontal", v, Side::Left, 1, left_start)?;
    }
    table.flush()?;
    traces.flush()?;
    Ok(Vec::new())
}

fn write_episode(log: &EpisodeLog, out_dir: &Path) -> Result<()> {
    let mut w = create(out_dir, "steps.csv")?;
    write_steps_csv(log, &mut w).context("writing steps.csv")?;
    w.flush()?;
    let mut w = create(out_dir, "events.csv")?;
    write_events_csv(log, &mut w).context("writing events.csv")?;
    w.flush()?;
    Ok(())
}

fn s2s(config: &ScenarioConfig, out_dir: &Path, report: &mut Report) -> Result<Vec<String>> {
    let a = &config.assertions;
    let log = run_s2s_episode(&config.s2s)?;
    write_episode(&log, out_dir)?;
    let summary = summarize_s2s(&log, a.transient_steps, a.error_window);

    report.line("steps", summary.steps);
    report.line("adaptation", config.s2s.adaptation.enabled);
    for (i, seg) in summary.segments.iter().enumerate() {
        report.line(
            format!("segment {i}"),
            format!(
                "v_x_d={} v_y_d={} steps={} counted={} mean_v_x={} relative_error={}",
                g(seg.v_x_d),
                g(seg.v_y_d),
                seg.steps,
                seg.counted,
                g(seg.mean_v_x),
                g(seg.relative_error)
            ),
        );
        if let Some(tol) = a.max_velocity_error {
            // Zero commands are held to an absolute 1e-12.
            let allowed = tol * seg.v_x_d.abs() + 1e-12;
            report.check(Check::at_most(
                format!("segment {i} |mean_v_x - v_x_d|"),
                seg.abs_error,
                allowed,
            ));
        }
    }
    report.line("err_norm_frontal_initial", g(summary.initial_err_norm_frontal));
    report.line("err_norm_frontal_final", g(summary.final_err_norm_frontal));
    report.line("placement_saturated", log.count(EventKind::PlacementSaturated));

    if let Some(min_reduction) = a.min_error_reduction {
        let mut baseline = config.s2s.clone();
        baseline.adaptation.enabled = false;
        let base_log = run_s2s_episode(&baseline)?;
        let base = summarize_s2s(&base_log, a.transient_steps, a.error_window);
        let reduction = 1.0 - summary.final_err_norm_frontal / base.final_err_norm_frontal;
        report.line(
            "err_norm_frontal_final_without_adaptation",
            g(base.final_err_norm_frontal),
        );
        report.line("error_reduction", g(reduction));
        report.check(Check::at_least("error_reduction", reduction, min_reduction));
    }
    Ok(Vec::new())
}

fn walk(loaded: &Loaded, out_dir: &Path, report: &mut Report) -> Result<Vec<String>> {
    let config = &loaded.config;
    let model = match config.model_path(&loaded.base_dir) {
        Some(path) => {
            let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            RobotModel::from_json_str(&text).with_context(|| format!("invalid model {}", path.display()))?
        }
        None => RobotModel::reduced_biped(),
    };
    let outcome = run_kinematic_walk(&model, &config.walk)?;
    write_episode(&outcome.log, out_dir)?;
    let mut w = create(out_dir, "ticks.csv")?;
    write_ticks_csv(&outcome.log, &model.q_labels(), &model.v_labels(), &mut w).context("writing ticks.csv")?;
    w.flush()?;

    let s = &outcome.summary;
    report.line("model", model.document().name.clone());
    report.line("steps", s.steps);
    report.line("ticks", outcome.log.ticks.len());
    let period2 = s.period2_metric.unwrap_or(f64::NAN);
    report.line(format!("period2_metric (k >= {})", s.period2_from_step), g(period2));
    report.line("com_height_max_deviation", g(s.com_height_max_deviation));
    report.line("touchdown_max_error", g(s.touchdown_max_error));
    report.line("swing_residual_late", g(s.swing_residual_late));
    report.line("max_kkt_residual", g(s.max_kkt_residual));
    report.line("unconverged_solves", s.unconverged_solves);
    let a = &config.assertions;
    if let Some(limit) = a.max_period2 {
        report.check(Check::at_most("period2_metric", period2, limit));
    }
    if let Some(limit) = a.max_com_height_deviation {
        report.check(Check::at_most(
            "com_height_max_deviation",
            s.com_height_max_deviation,
            limit,
        ));
    }
    if let Some(limit) = a.max_touchdown_error {
        report.check(Check::at_most("touchdown_max_error", s.touchdown_max_error, limit));
    }

    // Wall-clock figures vary run to run, so they stay out of the files.
    let lat = &outcome.solve_latencies;
    Ok(vec![format!(
        "qp_latency_us: p50={:.2} p99={:.2} max={:.2} solves={}",
        percentile(lat, 0.5) * 1e6,
        percentile(lat, 0.99) * 1e6,
        lat.iter().copied().fold(0.0, f64::max) * 1e6,
        lat.len()
    )])
}
