use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use nlsgap_core::gap::linspace;
use nlsgap_core::io::{
    history_rows, read_field_on, read_table, write_beta_star, write_field, write_gap_report, write_history, write_scan,
    BetaStarReport,
};
use nlsgap_core::{
    beta_scan, make_grid, solve_soliton, table_crossing, EigenOptions, Error, GapParams, GapReport, GapSolver, GridSpec,
    Result, ScanMode, SolitonParams, Termination,
};

use crate::args::{BetaStarCmd, EigenArgs, EigsCmd, GridArgs, ScanCmd, SolitonArgs, SolitonCmd};

fn grid(g: &GridArgs) -> Result<GridSpec> {
    make_grid(g.side, g.n)
}

fn soliton_params(beta: f64, s: &SolitonArgs) -> SolitonParams {
    SolitonParams { tol: s.tol, delta: s.delta, use_aitken: !s.no_aitken, max_iter: s.max_iter, ..SolitonParams::new(beta) }
}

fn gap_params(beta: f64, s: &SolitonArgs, e: &EigenArgs) -> GapParams {
    GapParams {
        soliton: soliton_params(beta, s),
        eigen: EigenOptions { tol: e.eig_tol, seed: e.seed, ..EigenOptions::default() },
        k_plus: e.k,
        k_minus: 2,
        cross_check: e.cross_check,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta < 2.0) {
        return Err(Error::InvalidParameter(format!("beta must lie in (0, 2), got {beta}")));
    }
    Ok(())
}

pub fn soliton(cmd: &SolitonCmd) -> Result<bool> {
    check_beta(cmd.beta)?;
    let g = grid(&cmd.grid)?;
    let params = soliton_params(cmd.beta, &cmd.soliton);
    let initial = cmd.load.as_ref().map(|p| read_field_on(p, g)).transpose()?;
    let result = solve_soliton(g, &params, initial.as_ref())?;

    let history = cmd.history.clone().unwrap_or_else(|| cmd.out.with_extension("csv"));
    write_history(create(&history)?, &history_rows(&result))?;

    println!("iterations    {}", result.iterations);
    println!("residual      {:e}", result.residual());
    println!("|M - 1|       {:e}", (result.m() - 1.0).abs());
    println!("max |R_j|     {:e}", result.max_abs_r());
    println!("phi(0)        {}", result.phi.samples()[g.origin_index()]);
    match &result.termination {
        Termination::Converged => {
            write_field(&cmd.out, &result.phi)?;
            println!("wrote {} and {}", cmd.out.display(), history.display());
            Ok(true)
        }
        Termination::MaxIterations => {
            eprintln!("error: no convergence in {} iterations (best residual {:e})", params.max_iter, result.residual());
            Ok(false)
        }
        Termination::Diverged { iteration, reason } => {
            eprintln!("error: iteration diverged at step {iteration}: {reason}");
            eprintln!(
                "the iteration is unstable when the box is large for the grid (roughly L > N/4); here h = L/N = {:.4}. \
                 Increase N or decrease L.",
                g.spacing()
            );
            Ok(false)
        }
    }
}

fn print_report(r: &GapReport) {
    println!("beta = {}   L = {}   N = {}", r.beta, r.grid.side(), r.grid.n());
    println!(
        "soliton: {} iterations, residual {:e}, |M - 1| {:e}, max |R_j| {:e}",
        r.soliton_iterations,
        r.soliton_residual,
        (r.soliton_m - 1.0).abs(),
        r.soliton_max_r
    );
    if !r.soliton_converged {
        return;
    }
    println!("{:>3}  {:>24}  {:>24}  {:>10}", "k", "lambda(K-)", "lambda(K+)", "rel. res.");
    for i in 0..r.lambdas_plus.len().max(r.lambdas_minus.len()) {
        let cell = |v: Option<&f64>| v.map(|x| format!("{x:.17}")).unwrap_or_default();
        let res = r.eigen_residuals.get(i).map(|x| format!("{x:.1e}")).unwrap_or_default();
        println!("{:>3}  {:>24}  {:>24}  {:>10}", i + 1, cell(r.lambdas_minus.get(i)), cell(r.lambdas_plus.get(i)), res);
    }
    if let Some(direct) = &r.lambdas_plus_direct {
        let dev = direct.iter().zip(&r.lambdas_plus).map(|(a, b)| ((a - b) / b).abs()).fold(0.0, f64::max);
        println!("direct K+ solve: max relative deviation {dev:.2e}");
    }
    let sizes: Vec<String> = r.clusters_plus.iter().map(|c| c.len().to_string()).collect();
    println!("K+ clusters: ({})   triplet spread {:.2e}", sizes.join(", "), r.triplet_spread);
    let verdict = |b: Option<bool>| match b {
        Some(true) => "yes",
        Some(false) => "no",
        None => "unknown",
    };
    println!("lambda2(K-) < 1: {}", verdict(r.gap_minus_ok));
    println!("lambda5(K+) < 1: {}", verdict(r.gap_plus_ok));
    println!("gap property:    {}", verdict(r.gap_property));
}

pub fn eigs(cmd: &EigsCmd) -> Result<bool> {
    check_beta(cmd.beta)?;
    let g = grid(&cmd.grid)?;
    let initial = cmd.load.as_ref().map(|p| read_field_on(p, g)).transpose()?;
    let mut solver = GapSolver::new(g, gap_params(cmd.beta, &cmd.soliton, &cmd.eigen))?;
    let report = solver.check_from(cmd.beta, initial.as_ref())?;
    print_report(&report);
    if !report.soliton_converged {
        eprintln!("error: soliton did not converge; no gap verdict");
        return Ok(false);
    }
    if !report.eigen_converged {
        eprintln!("warning: eigensolver stopped before reaching the requested tolerance");
    }
    if let Some(out) = &cmd.out {
        write_gap_report(create(out)?, &report)?;
    }
    Ok(!cmd.assert_gap || report.gap_property == Some(true))
}

pub fn scan(cmd: &ScanCmd) -> Result<bool> {
    if cmd.steps == 0 || !(cmd.beta_min < cmd.beta_max || cmd.steps == 1) {
        return Err(Error::InvalidParameter("need beta-min < beta-max and at least one step".into()));
    }
    let g = grid(&cmd.grid)?;
    let betas = linspace(cmd.beta_min, cmd.beta_max, cmd.steps);
    let mode = if cmd.parallel { ScanMode::ParallelCold } else { ScanMode::SequentialWarm };
    let scan = beta_scan(&betas, g, &gap_params(betas[0], &cmd.soliton, &cmd.eigen), mode)?;
    match &cmd.out {
        Some(path) => {
            write_scan(create(path)?, &scan)?;
            println!("{:>20}  {:>20}  {:>20}  {:>10}", "beta", "lambda5(K+)", "lambda2(K-)", "spread");
            for r in &scan.rows {
                println!("{:>20.17}  {:>20.17}  {:>20.17}  {:>10.2e}", r.beta, r.lambda5_plus, r.lambda2_minus, r.triplet_spread);
            }
            println!("sign changes of lambda5 - 1 after rows: {:?}", scan.sign_changes());
        }
        None => {
            let stdout = io::stdout();
            write_scan(stdout.lock(), &scan)?;
        }
    }
    let mut ok = true;
    for r in &scan.rows {
        if let Some(f) = &r.failure {
            eprintln!("error: beta = {}: {f}", r.beta);
            ok = false;
        }
    }
    Ok(ok)
}

fn print_table(table: &[(f64, f64); 4], root: f64, uncertainty: f64) {
    println!("{:>14}  {:>16}", "beta", "lambda5(K+)");
    for (b, l) in table {
        println!("{b:>14.10}  {l:>16.12}");
    }
    println!("beta* = {root:.12} +/- {uncertainty:.1e}");
}

pub fn betastar(cmd: &BetaStarCmd) -> Result<bool> {
    if cmd.table_only {
        let path = cmd.input.as_ref().expect("clap enforces --input");
        let table = read_table(File::open(path)?)?;
        let (root, uncertainty, fit) = table_crossing(&table, 1.0, cmd.eigen.eig_tol)?;
        print_table(&table, root, uncertainty);
        if let Some(out) = &cmd.out {
            let rep = BetaStarReport {
                bracket: (table[0].0, table[3].0),
                table,
                fit,
                beta_star: root,
                uncertainty,
                evaluations: table.to_vec(),
            };
            write_beta_star(create(out)?, &rep)?;
        }
        return Ok(true);
    }
    let (lo, hi) = (cmd.bracket[0], cmd.bracket[1]);
    check_beta(lo)?;
    check_beta(hi)?;
    let g = grid(&cmd.grid)?;
    let params = gap_params(lo, &cmd.soliton, &cmd.eigen);
    let mut solver = GapSolver::new(g, params)?;
    let star = nlsgap_core::locate_crossing(
        |b| {
            let v = solver.lambda5_plus(b)?;
            eprintln!("beta {b:.12}  lambda5(K+) {v:.15}");
            Ok(v)
        },
        (lo, hi),
        cmd.beta_tol,
        params.eigen.tol,
    )?;
    print_table(&star.table, star.beta_star, star.uncertainty);
    if let Some(out) = &cmd.out {
        let mut w = create(out)?;
        write_beta_star(&mut w, &BetaStarReport::from(&star))?;
        w.flush()?;
    }
    Ok(true)
}
