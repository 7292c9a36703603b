//! Batch front end: ingest an environment document, dispatch solver, oracle,
//! or sweep commands, and emit reports plus plot-ready data files.
//!
//! One JSON config per run; command-line flags override config fields. All
//! console numbers carry nine significant digits; files carry full doubles.
//! The process exits nonzero iff an audit fails (binding residual above
//! tolerance, a failed verdict, or an invalid emitted artifact).

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Parser;
use serde::{Deserialize, Serialize};

use careerwage::comparative::{self, SweepAxis};
use careerwage::environment::{EffectiveCost, Environment, InfoMode};
use careerwage::informed::{self, InformedConfig};
use careerwage::numeric::sig9;
use careerwage::oracle::{self, OracleConfig};
use careerwage::policy::WagePolicy;
use careerwage::uninformed::{self, SolverConfig};

#[derive(Parser, Debug)]
#[command(
    name = "careerwage",
    about = "Career-concern wage design: solvers, diagnostics, and a brute-force equilibrium oracle"
)]
struct Cli {
    /// JSON run configuration; flags below override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    /// analyze | solve | solve-informed | enumerate | verify | sweep
    #[arg(long)]
    command: Option<String>,
    /// Environment JSON document
    #[arg(long)]
    env: Option<PathBuf>,
    /// Wage-policy JSON document (enumerate, verify)
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Target working probability(s), e.g. "1" or "qL,qH"
    #[arg(long = "target-q")]
    target_q: Option<String>,
    /// Scan/grid resolution override
    #[arg(long)]
    grid: Option<usize>,
    /// Residual tolerance override
    #[arg(long)]
    tol: Option<f64>,
    /// Approximating-policy shift (verify); 0 verifies the policy as-is
    #[arg(long)]
    eps: Option<f64>,
    /// Sweep axis: covariance | premium-slope | discount
    #[arg(long)]
    axis: Option<String>,
    /// Sweep axis values, comma separated
    #[arg(long)]
    points: Option<String>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed recorded in outputs (and used by any randomized suite)
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
struct RunConfig {
    command: Option<String>,
    env: Option<PathBuf>,
    policy: Option<PathBuf>,
    target_q: Option<String>,
    grid: Option<usize>,
    tol: Option<f64>,
    eps: Option<f64>,
    axis: Option<String>,
    points: Option<Vec<f64>>,
    out: Option<PathBuf>,
    seed: Option<u64>,
}

impl RunConfig {
    fn merge_cli(mut self, cli: Cli) -> Result<Self> {
        if cli.command.is_some() {
            self.command = cli.command;
        }
        if cli.env.is_some() {
            self.env = cli.env;
        }
        if cli.policy.is_some() {
            self.policy = cli.policy;
        }
        if cli.target_q.is_some() {
            self.target_q = cli.target_q;
        }
        if cli.grid.is_some() {
            self.grid = cli.grid;
        }
        if cli.tol.is_some() {
            self.tol = cli.tol;
        }
        if cli.eps.is_some() {
            self.eps = cli.eps;
        }
        if cli.axis.is_some() {
            self.axis = cli.axis;
        }
        if let Some(p) = cli.points {
            self.points = Some(parse_f64_list(&p)?);
        }
        if cli.out.is_some() {
            self.out = cli.out;
        }
        if cli.seed.is_some() {
            self.seed = cli.seed;
        }
        Ok(self)
    }
}

fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .with_context(|| format!("bad number `{t}`"))
        })
        .collect()
}

fn main() {
    match run() {
        Ok(true) => {}
        Ok(false) => std::process::exit(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(2);
        }
    }
}

fn run() -> Result<bool> {
    let cli = Cli::parse();
    let base = match &cli.config {
        Some(path) => {
            let doc = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            serde_json::from_str::<RunConfig>(&doc)
                .with_context(|| format!("parsing config {}", path.display()))?
        }
        None => RunConfig::default(),
    };
    let cfg = base.merge_cli(cli)?;
    let command = cfg
        .command
        .clone()
        .context("no command given (--command or config)")?;
    let out_dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating output dir {}", out_dir.display()))?;
    write_schema_doc(&out_dir)?;

    let ctx = RunCtx { cfg, out_dir };
    match command.as_str() {
        "analyze" => cmd_analyze(&ctx),
        "solve" => cmd_solve(&ctx),
        "solve-informed" => cmd_solve_informed(&ctx),
        "enumerate" => cmd_enumerate(&ctx),
        "verify" => cmd_verify(&ctx),
        "sweep" => cmd_sweep(&ctx),
        other => bail!("unknown command `{other}`"),
    }
}

struct RunCtx {
    cfg: RunConfig,
    out_dir: PathBuf,
}

impl RunCtx {
    fn env(&self) -> Result<Environment> {
        let path = self.cfg.env.as_ref().context("no --env given")?;
        let doc =
            fs::read_to_string(path).with_context(|| format!("reading env {}", path.display()))?;
        Environment::from_json(&doc).map_err(|e| anyhow::anyhow!("invalid environment: {e}"))
    }

    fn policy(&self) -> Result<WagePolicy> {
        let path = self.cfg.policy.as_ref().context("no --policy given")?;
        let doc = fs::read_to_string(path)
            .with_context(|| format!("reading policy {}", path.display()))?;
        WagePolicy::from_json(&doc).map_err(|e| anyhow::anyhow!("invalid policy: {e}"))
    }

    fn oracle_config(&self) -> OracleConfig {
        let mut oc = OracleConfig::default();
        if let Some(g) = self.cfg.grid {
            oc.grid_n = g;
        }
        if let Some(t) = self.cfg.tol {
            oc.residual_tol = t;
        }
        oc
    }

    fn target_profile(&self, env: &Environment) -> Result<Vec<f64>> {
        match &self.cfg.target_q {
            None => Ok(vec![1.0; env.num_types()]),
            Some(s) => {
                let v = parse_f64_list(s)?;
                if env.info_mode() == InfoMode::Uninformed {
                    if v.len() != 1 {
                        bail!("uninformed targets take a single probability");
                    }
                } else if v.len() != env.num_types() {
                    bail!(
                        "informed target needs {} entries (internal order: decreasing effective cost)",
                        env.num_types()
                    );
                }
                Ok(v)
            }
        }
    }

    fn seed(&self) -> u64 {
        self.cfg.seed.unwrap_or(0)
    }

    fn write_atomic(&self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.out_dir.join(name);
        let tmp = self.out_dir.join(format!(".{name}.tmp"));
        fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
        fs::rename(&tmp, &path).with_context(|| format!("renaming into {}", path.display()))?;
        Ok(path)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let doc = serde_json::to_string_pretty(value)?;
        self.write_atomic(name, doc.as_bytes())
    }
}

fn write_schema_doc(out_dir: &Path) -> Result<()> {
    let text = "\
careerwage output schema

report.json        run report: command, seed, environment echo, diagnostics,
                   audit results (binding_residual_max, verdicts)
policy.json        wage policy: {\"atoms\":[[w,m],...],\"pieces\":[{\"from\",\"to\",
                   \"cdf_from\",\"cdf_to\",\"knots\":[[w,cdf],...]}]}
cdf.csv            columns: w,cdf,tail (sampled distribution for plotting)
d_samples.csv      columns: q,D (career value on the analysis grid)
records.csv        columns: class,qs,thresholds,mixing,residual,span_lo,span_hi
                   (one row per equilibrium record; multi-entry fields use ';')
records.json       the same records as JSON
sweep.csv          columns: axis_value,covariance,w_low,w_high,range,variance,
                   mean,atoms,binding_residual_max,error (one row per point)
";
    let tmp = out_dir.join(".schema.txt.tmp");
    fs::write(&tmp, text)?;
    fs::rename(tmp, out_dir.join("schema.txt"))?;
    Ok(())
}

#[derive(Serialize)]
struct AnalyzeReport {
    seed: u64,
    info_mode: InfoMode,
    types: Vec<String>,
    effective_cost: EffectiveCost,
    w_low: f64,
    w_high: f64,
    strategic_uncertainty: bool,
    covariance: Option<f64>,
    complementarity: Option<careerwage::ComplementarityReport>,
    d_min: f64,
    d_argmin: f64,
    d_at_full_work: f64,
}

fn cmd_analyze(ctx: &RunCtx) -> Result<bool> {
    let env = ctx.env()?;
    match env.info_mode() {
        InfoMode::Uninformed => {
            let grid = ctx.cfg.grid.unwrap_or(4096);
            let analysis = uninformed::UninformedAnalysis::new(&env, grid)?;
            let d = analysis.career_value();
            let cov = env.linear_criterion().ok();
            let report = AnalyzeReport {
                seed: ctx.seed(),
                info_mode: env.info_mode(),
                types: env.labels().to_vec(),
                effective_cost: env.effective_cost(),
                w_low: analysis.w_low(),
                w_high: analysis.w_high(),
                strategic_uncertainty: analysis.strategic_uncertainty(),
                covariance: cov.map(|(c, _)| c),
                complementarity: env.complementarity_check().ok(),
                d_min: d.min_value(),
                d_argmin: d.argmin_q(),
                d_at_full_work: d.eval(1.0),
            };
            ctx.write_json("report.json", &report)?;
            let mut csv_buf = Vec::new();
            {
                let mut w = csv::Writer::from_writer(&mut csv_buf);
                w.write_record(["q", "D"])?;
                for i in 0..=d.grid_n() {
                    w.write_record([
                        format!("{:.17}", d.q_at(i)),
                        format!("{:.17}", d.at_grid(i)),
                    ])?;
                }
                w.flush()?;
            }
            ctx.write_atomic("d_samples.csv", &csv_buf)?;
            println!("lambda          = {}", sig9(analysis.lambda()));
            println!("w_low (PR)      = {}", sig9(analysis.w_low()));
            println!("w_high (FD)     = {}", sig9(analysis.w_high()));
            println!(
                "strategic_uncertainty = {}",
                analysis.strategic_uncertainty()
            );
            if let Some((c, flag)) = cov {
                println!("cov(u,p)        = {} (positive: {})", sig9(c), flag);
            }
            if let Some(rep) = &report.complementarity {
                println!("complementarity = {:?}", rep.verdict);
            }
            Ok(true)
        }
        InfoMode::Informed => {
            let (w_low, w_high) = informed::critical_wages_informed(&env)?;
            let assumptions = informed::assumptions_check(&env)?;
            let report = serde_json::json!({
                "seed": ctx.seed(),
                "info_mode": "informed",
                "types": env.labels(),
                "effective_cost": env.effective_cost(),
                "w_low_tilde": w_low,
                "w_high_tilde": w_high,
                "dispersion": w_high > w_low + 1e-10,
                "assumptions": assumptions,
            });
            ctx.write_json("report.json", &report)?;
            println!("lambdas         = {:?}", env.lambdas());
            println!("w_low~ (PR)     = {}", sig9(w_low));
            println!("w_high~ (FD)    = {}", sig9(w_high));
            println!("dispersion      = {}", w_high > w_low + 1e-10);
            println!("assumptions hold = {}", assumptions.all_hold());
            Ok(true)
        }
    }
}

fn emit_policy_files(ctx: &RunCtx, policy: &WagePolicy) -> Result<bool> {
    let path = ctx.write_atomic("policy.json", policy.to_json().as_bytes())?;
    // round-trip audit: every emitted policy file re-validates on load
    let doc = fs::read_to_string(&path)?;
    let ok = WagePolicy::from_json(&doc).is_ok();
    let mut cdf = Vec::new();
    policy.write_cdf_csv(&mut cdf, 1024)?;
    ctx.write_atomic("cdf.csv", &cdf)?;
    Ok(ok)
}

fn cmd_solve(ctx: &RunCtx) -> Result<bool> {
    let env = ctx.env()?;
    let mut solver_cfg = SolverConfig::default();
    if let Some(g) = ctx.cfg.grid {
        solver_cfg.q_grid_n = g;
        solver_cfg.w_grid_n = g;
    }
    let target = ctx.target_profile(&env)?[0];
    let sol = if target >= 1.0 {
        uninformed::robust_policy_with(&env, solver_cfg)?
    } else {
        uninformed::robust_policy_partial_with(&env, target, solver_cfg)?
    };
    let tol = ctx.cfg.tol.unwrap_or(1e-7);
    let audit_ok = sol.binding_residual_max <= tol && sol.minorant_violation <= tol;
    let round_trip_ok = emit_policy_files(ctx, &sol.policy)?;
    let report = serde_json::json!({
        "seed": ctx.seed(),
        "target_q": sol.target_q,
        "report": sol.report(),
        "mass_points": sol.mass_points,
        "audit_ok": audit_ok,
    });
    ctx.write_json("report.json", &report)?;
    println!("w_low  = {}", sig9(sol.w_low));
    println!("w_high = {}", sig9(sol.w_high));
    println!("mean   = {}", sig9(sol.policy.stats().mean));
    println!("atoms  = {}", sol.mass_points.len());
    println!("binding residual max = {:.3e}", sol.binding_residual_max);
    println!("audit  = {}", if audit_ok { "ok" } else { "FAILED" });
    Ok(audit_ok && round_trip_ok)
}

fn cmd_solve_informed(ctx: &RunCtx) -> Result<bool> {
    let env = ctx.env()?;
    let mut icfg = InformedConfig::default();
    if let Some(g) = ctx.cfg.grid {
        icfg.steps_per_gap = g;
    }
    let target = ctx.target_profile(&env)?;
    let sol = if env.num_types() == 2 {
        if target.iter().all(|&q| q >= 1.0) {
            informed::robust_policy_informed_with(&env, icfg)?
        } else {
            informed::robust_policy_informed_q_with(&env, &target, icfg)?
        }
    } else {
        informed::greedy_policy_multi_with(&env, icfg)?
    };
    let tol = ctx.cfg.tol.unwrap_or(1e-6);
    let audit_ok = sol.binding_residual_max <= tol;
    let round_trip_ok = emit_policy_files(ctx, &sol.policy)?;
    let (bill, decomposed) = informed::expected_wage_informed(&env, &sol.policy, &sol.target)?;
    let report = serde_json::json!({
        "seed": ctx.seed(),
        "target": sol.target,
        "lambdas": sol.lambdas,
        "w_low_tilde": sol.w_low_tilde,
        "w_high_tilde": sol.w_high_tilde,
        "dispersion": sol.dispersion,
        "atoms": sol.atom_list,
        "binding_residual_max": sol.binding_residual_max,
        "expected_wage_bill": bill,
        "objective_decomposition": decomposed,
        "audit_ok": audit_ok,
    });
    ctx.write_json("report.json", &report)?;
    println!("w_low~  = {}", sig9(sol.w_low_tilde));
    println!("w_high~ = {}", sig9(sol.w_high_tilde));
    println!("atoms   = {}", sol.atom_list.len());
    println!("binding residual max = {:.3e}", sol.binding_residual_max);
    println!("audit   = {}", if audit_ok { "ok" } else { "FAILED" });
    Ok(audit_ok && round_trip_ok)
}

fn cmd_enumerate(ctx: &RunCtx) -> Result<bool> {
    let env = ctx.env()?;
    let policy = ctx.policy()?;
    let oc = ctx.oracle_config();
    let records = match env.info_mode() {
        InfoMode::Uninformed => oracle::enumerate_uninformed_with(&env, &policy, oc.grid_n, oc)?,
        InfoMode::Informed => oracle::enumerate_informed_with(&env, &policy, oc.grid_n, oc)?,
    };
    ctx.write_json("records.json", &records)?;
    let mut buf = Vec::new();
    oracle::write_records_csv(&mut buf, &records)?;
    ctx.write_atomic("records.csv", &buf)?;
    let sound = records.iter().all(|r| r.residual <= oc.residual_tol);
    println!("records = {}", records.len());
    for r in &records {
        println!(
            "  {:?} q={:?} thresholds={:?} residual={:.2e}",
            r.class, r.qs, r.thresholds, r.residual
        );
    }
    println!("soundness = {}", if sound { "ok" } else { "FAILED" });
    Ok(sound)
}

fn cmd_verify(ctx: &RunCtx) -> Result<bool> {
    let env = ctx.env()?;
    let oc = ctx.oracle_config();
    let eps = ctx.cfg.eps.unwrap_or(1e-3);
    let target = ctx.target_profile(&env)?;
    // verify a supplied policy, or solve first and verify the solution
    let shifted: WagePolicy = match env.info_mode() {
        InfoMode::Uninformed => {
            let policy = if ctx.cfg.policy.is_some() {
                ctx.policy()?
            } else if target[0] >= 1.0 {
                uninformed::robust_policy(&env)?.policy
            } else {
                uninformed::robust_policy_partial(&env, target[0])?.policy
            };
            if eps > 0.0 {
                // firing mass (if any) stays put; only the dispersed part shifts
                oracle::approximating_policy_uninformed_above(
                    &policy,
                    eps,
                    (1.0 - target[0]).clamp(0.0, 1.0 - 1e-12),
                )?
            } else {
                policy
            }
        }
        InfoMode::Informed => {
            if ctx.cfg.policy.is_some() {
                let supplied = ctx.policy()?;
                if eps > 0.0 {
                    oracle::approximating_policy_informed(&supplied, eps, None, &[])?
                } else {
                    supplied
                }
            } else {
                let sol = if target.iter().all(|&q| q >= 1.0) || env.num_types() != 2 {
                    informed::robust_policy_informed(&env)?
                } else {
                    informed::robust_policy_informed_q(&env, &target)?
                };
                if eps > 0.0 {
                    sol.approximating_policy(eps, false)?
                } else {
                    sol.policy
                }
            }
        }
    };
    let verdict = match env.info_mode() {
        InfoMode::Uninformed => oracle::fully_implements_with(&env, &shifted, target[0], oc)?,
        InfoMode::Informed => oracle::fully_implements_informed_with(&env, &shifted, &target, oc)?,
    };
    let report = serde_json::json!({
        "seed": ctx.seed(),
        "eps": eps,
        "target": target,
        "verdict": verdict,
    });
    ctx.write_json("report.json", &report)?;
    println!(
        "fully_implements = {} (target {:?}, {} witness(es))",
        verdict.fully_implements,
        verdict.target,
        verdict.witnesses.len()
    );
    for w in verdict.witnesses.iter().take(5) {
        println!(
            "  witness: {:?} q={:?} threshold={:?}",
            w.class, w.qs, w.thresholds
        );
    }
    Ok(verdict.fully_implements)
}

fn cmd_sweep(ctx: &RunCtx) -> Result<bool> {
    let env = ctx.env()?;
    let axis = match ctx.cfg.axis.as_deref() {
        Some("covariance") => SweepAxis::Covariance,
        Some("premium-slope") => SweepAxis::PremiumSlope,
        Some("discount") | None => SweepAxis::Discount,
        Some(other) => bail!("unknown axis `{other}`"),
    };
    let points = ctx
        .cfg
        .points
        .clone()
        .unwrap_or_else(|| vec![0.25, 0.5, 0.75, 1.0]);
    let result = comparative::sweep(&env, axis, &points)?;
    let mut buf = Vec::new();
    result.write_csv(&mut buf)?;
    ctx.write_atomic("sweep.csv", &buf)?;
    let report = serde_json::json!({
        "seed": ctx.seed(),
        "axis": result.axis,
        "points": result.points,
        "more_dispersed_pairwise": result.more_dispersed_pairwise,
    });
    ctx.write_json("report.json", &report)?;
    let tol = ctx.cfg.tol.unwrap_or(1e-7);
    let audit_ok = result
        .points
        .iter()
        .filter(|p| p.error.is_none())
        .all(|p| p.binding_residual_max <= tol);
    for p in &result.points {
        match &p.error {
            Some(e) => println!("{}: rejected ({e})", sig9(p.axis_value)),
            None => println!(
                "{}: range={} var={} mean={} atoms={}",
                sig9(p.axis_value),
                sig9(p.range),
                sig9(p.variance),
                sig9(p.mean),
                p.atom_count
            ),
        }
    }
    println!("audit = {}", if audit_ok { "ok" } else { "FAILED" });
    Ok(audit_ok)
}
