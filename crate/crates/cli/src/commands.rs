use std::fs;
use std::process::ExitCode;

use quadisrk::benchmark::{self, BenchmarkSpec, Method};
use quadisrk::linalg;
use quadisrk::lyapunov::{self, Gramian};
use quadisrk::quadrature::{self, QuadratureRule};
use quadisrk::reduction::{self, IterationTrace, ReductionConfig};
use quadisrk::sampling::{self, caching_oracle, replay_oracle, state_space_oracle};
use quadisrk::{
    build_data_block, h2_norm, hinf_norm, intrusive_data_block, poles, relative_errors, Complex64, Error,
    FrequencyResponseOracle, ReducedModel, Result, ShiftSet, StateSpaceModel,
};

use crate::{QuadratureArgs, ReduceArgs, SampleExportArgs, SweepArgs, ValidateArgs};

fn rule_from(args: &QuadratureArgs) -> Result<QuadratureRule> {
    match &args.rule {
        Some(path) => QuadratureRule::read_csv(path),
        None => quadrature::trapezoid_rule(args.omega_min, args.omega_max, args.half_count),
    }
}

fn config_from(a: &ReduceArgs) -> Result<ReductionConfig> {
    let mut cfg = ReductionConfig::new(a.r).with_tau(a.tau).with_max_iter(a.max_iter);
    cfg.orthonormalize = !a.primitive;
    if let Some(shifts) = &a.shifts {
        cfg = cfg.with_initial_shifts(ShiftSet::from_real(shifts)?);
    }
    Ok(cfg)
}

fn write_outputs(a: &ReduceArgs, rom: &ReducedModel, trace: &IterationTrace) -> Result<()> {
    fs::write(&a.out, serde_json::to_string_pretty(&rom.to_json_value())?)?;
    if let Some(path) = &a.trace {
        trace.write_csv(fs::File::create(path)?)?;
    }
    Ok(())
}

pub fn reduce(a: ReduceArgs) -> Result<ExitCode> {
    let method: Method = a.method.parse()?;
    let config = config_from(&a)?;
    let model = a.model.as_ref().map(StateSpaceModel::load).transpose()?;
    let (rom, trace, queries) = match (method, &model) {
        (Method::QuadIsrk, Some(m)) => {
            let rule = rule_from(&a.quadrature)?;
            let oracle = caching_oracle(state_space_oracle(m));
            let (rom, trace) = reduction::quad_isrk(&oracle, &rule, &config)?;
            (rom, trace, Some(oracle.backend_calls()))
        }
        (Method::QuadIsrk, None) => {
            let path = a.samples.as_ref().expect("clap requires a source");
            let rule = rule_from(&a.quadrature)?;
            let oracle = replay_oracle(sampling::read_samples_csv(path)?)?;
            let (rom, trace) = reduction::quad_isrk(&oracle, &rule, &config)?;
            (rom, trace, None)
        }
        (_, None) => {
            return Err(Error::InvalidConfig(format!("{method} needs --model; sample files only drive quad-isrk")));
        }
        (Method::Isrk, Some(m)) => {
            let (rom, trace) = reduction::isrk(m, &config)?;
            (rom, trace, None)
        }
        (Method::Irka, Some(m)) => {
            let (rom, trace) = reduction::irka(m, &config)?;
            (rom, trace, None)
        }
    };
    write_outputs(&a, &rom, &trace)?;

    println!("method       {method}");
    println!("r            {}", rom.r());
    println!("status       {:?}", trace.status);
    println!("iterations   {}", trace.iterations());
    if let Some(q) = queries {
        println!("oracle calls {q}");
    }
    if let Some(m) = &model {
        match relative_errors(m, &rom) {
            Ok(err) => {
                println!("h2_rel       {:e}", err.h2_rel);
                println!("hinf_rel     {:e}", err.hinf_rel);
            }
            Err(e) => println!("errors       unavailable ({e})"),
        }
    }
    Ok(ExitCode::SUCCESS)
}

pub fn sweep(a: SweepArgs) -> Result<ExitCode> {
    let spec = BenchmarkSpec::load(&a.spec)?;
    let result = benchmark::run_sweep(&spec)?;
    result.write_csv(&a.out)?;
    for row in &result.rows {
        if let Some(msg) = &row.error {
            eprintln!("{} r={}: {msg}", row.method, row.r);
        }
    }
    println!("{} rows written to {}", result.rows.len(), a.out.display());
    Ok(ExitCode::SUCCESS)
}

pub fn sample_export(a: SampleExportArgs) -> Result<ExitCode> {
    let model = StateSpaceModel::load(&a.model)?;
    let rule = rule_from(&a.quadrature)?;
    let oracle = caching_oracle(state_space_oracle(&model));
    for s in rule.nodes() {
        oracle.sample(s)?;
    }
    if let Some(r) = a.r {
        let config = ReductionConfig::new(r).with_tau(a.tau).with_max_iter(a.max_iter);
        let (_, trace) = reduction::quad_isrk(&oracle, &rule, &config)?;
        println!("quad-isrk r={r}: {:?} after {} iterations", trace.status, trace.iterations());
    }
    let log = oracle.log();
    log.write_csv(&a.out)?;
    if let Some(path) = &a.rule_out {
        rule.write_csv(path)?;
    }
    println!("{} samples written to {}", log.backend_calls(), a.out.display());
    Ok(ExitCode::SUCCESS)
}

struct Report {
    failed: bool,
}

impl Report {
    fn check(&mut self, name: &str, ok: bool, detail: String) {
        println!("{:<5} {name}: {detail}", if ok { "pass" } else { "FAIL" });
        self.failed |= !ok;
    }

    fn info(&self, name: &str, detail: String) {
        println!("info  {name}: {detail}");
    }
}

pub fn validate(a: ValidateArgs) -> Result<ExitCode> {
    let model = StateSpaceModel::load(&a.model)?;
    let mut report = Report { failed: false };
    println!("model n={}", model.n());

    let p = poles(&model)?;
    let alpha = p.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    report.check("stability", alpha < -quadisrk::lti::STABILITY_MARGIN, format!("spectral abscissa {alpha:e}"));
    if report.failed {
        for z in &p {
            println!("      pole {z}");
        }
        return Ok(ExitCode::from(2));
    }

    let mut gramian = |name: &str, g: Result<Gramian>| -> Option<Gramian> {
        match g {
            Ok(g) => {
                let res = lyapunov::lyapunov_residual(&model, &g);
                report.check(name, res <= lyapunov::RESIDUAL_TOL, format!("relative residual {res:e}"));
                Some(g)
            }
            Err(e) => {
                report.check(name, false, e.to_string());
                None
            }
        }
    };
    gramian("lyapunov P", lyapunov::solve_lyapunov_p(&model));
    let q = gramian("lyapunov Q", lyapunov::solve_lyapunov_q(&model));

    let oracle = state_space_oracle(&model);
    let mut worst = 0.0_f64;
    for k in 0..100 {
        // deterministic scatter over the right half-plane and imaginary axis
        let t = k as f64 + 1.0;
        let s = Complex64::new((t * 0.618_034).fract() * 2.0, (t * 0.414_214).fract() * 20.0 - 10.0);
        let (h, hc) = (oracle.sample(s)?, oracle.sample(s.conj())?);
        worst = worst.max((h.conj() - hc).norm() / h.norm().max(f64::MIN_POSITIVE));
    }
    report.check("conjugate symmetry", worst <= 1e-12, format!("max relative deviation {worst:e} over 100 points"));

    let rule = rule_from(&a.quadrature)?;
    if let Some(q) = q {
        let qt = quadrature::approx_gramian_q(&model, &rule)?;
        let rel = (&qt - q.matrix()).norm() / q.matrix().norm();
        report.info("quadrature gramian", format!("‖Q̃ - Q‖/‖Q‖ = {rel:e} with Nq = {}", rule.len()));
    }

    let r = model.n().min(2);
    let shifts = ShiftSet::log_spaced(r, 0.1, 10.0)?;
    match (build_data_block(&oracle, &rule, &shifts), intrusive_data_block(&model, &rule, &shifts)) {
        (Ok(data), Ok(intr)) => {
            let scale = linalg::max_abs(&intr.l).max(linalg::max_abs(&intr.m));
            let diff = linalg::max_abs(&(&data.l - &intr.l)).max(linalg::max_abs(&(&data.m - &intr.m)));
            report.check("sample-built data matrices", diff <= 1e-10 * scale, format!("max relative deviation {:e}", diff / scale));
        }
        (Err(e), _) | (_, Err(e)) => report.check("sample-built data matrices", false, e.to_string()),
    }

    match (h2_norm(&model), hinf_norm(&model)) {
        (Ok(h2), Ok(hinf)) => report.info("norms", format!("H2 {h2:e}, Hinf {hinf:e}")),
        (Err(e), _) | (_, Err(e)) => report.check("norms", false, e.to_string()),
    }

    Ok(if report.failed { ExitCode::from(2) } else { ExitCode::SUCCESS })
}
