use crate::args::{Command, CylCmd, FbmCmd, FracCmd, FracIo, HeatCmd, IntegrateArgs, TailArg, ValidateCmd, WienerArgs};
use crate::specs::{EmbeddingSpec, PsiSpec};
use cylfbm::cauchy::{
    bound_check_high, bound_check_low, existence_criterion, semigroup_hs_test, simulate_mild, SpectralModel,
};
use cylfbm::cylfbm::{apply, is_genuine, q_form, CylFbm, TailReport, TailRule, WeightRule};
use cylfbm::fbm_core::{covariance, sample_paths, Hurst, Regime, TimeGrid};
use cylfbm::fracops::{frac_derivative, frac_integral, kstar, m_norm, Interp, SampledFunction, SimpleFunction};
use cylfbm::harness::suite::{render, run_all, Scale};
use cylfbm::stochint::{covariance_q_psi, hs_test, simulate};
use cylfbm::wiener::wiener_integral;
use cylfbm::Error;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

/// Why a run did not succeed.
#[derive(Debug)]
pub enum Failure {
    /// Bad input or a domain error (exit 2).
    Usage(String),
    /// An embedded check failed (exit 1).
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        Failure::Usage(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Failure {
        Failure::Usage(e.to_string())
    }
}

impl From<String> for Failure {
    fn from(e: String) -> Failure {
        Failure::Usage(e)
    }
}

type Out = Result<(), Failure>;

fn sink(path: &Option<std::path::PathBuf>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn hurst(h: f64) -> Result<Hurst, Failure> {
    Ok(Hurst::new(h)?)
}

fn tail_rule(t: TailArg) -> TailRule {
    match t {
        TailArg::Auto => TailRule::Auto,
        TailArg::Fitted => TailRule::Fitted,
    }
}

pub fn run(cmd: &Command) -> Out {
    match cmd {
        Command::Fbm(FbmCmd::Sample { hurst: h, grid, paths, seed, out }) => {
            let g = TimeGrid::new(grid.t_end, grid.grid_n)?;
            let set = sample_paths(g, hurst(*h)?, *paths, seed.seed)?;
            let mut w = sink(out)?;
            set.write_csv(&mut w)?;
            w.flush()?;
            Ok(())
        }
        Command::Frac(c) => frac(c),
        Command::Wiener(a) => wiener(a),
        Command::Cyl(c) => cyl(c),
        Command::Integrate(a) => integrate(a),
        Command::Heat(c) => heat(c),
        Command::Validate(ValidateCmd::All { full, seed, out, .. }) => {
            let scale = if *full { Scale::Full } else { Scale::Quick };
            let checks = run_all(scale, seed.seed);
            let report = render(&checks);
            print!("{report}");
            if let Some(p) = out {
                std::fs::write(p, &report)?;
            }
            let failed = checks.iter().filter(|c| !c.pass).count();
            if failed > 0 {
                return Err(Failure::Check(format!("{failed} of {} checks failed", checks.len())));
            }
            Ok(())
        }
    }
}

fn read_function(io_args: &FracIo, interp: Interp) -> Result<SampledFunction, Failure> {
    let f = match &io_args.input {
        Some(p) => {
            let file = File::open(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
            SampledFunction::read_csv(BufReader::new(file), interp)?
        }
        None => {
            let mut s = String::new();
            io::stdin().read_to_string(&mut s)?;
            SampledFunction::read_csv(s.as_bytes(), interp)?
        }
    };
    Ok(f)
}

fn frac(c: &FracCmd) -> Out {
    let (result, io_args) = match c {
        FracCmd::Integral { alpha, io } => (frac_integral(&read_function(io, Interp::Linear)?, *alpha)?, io),
        FracCmd::Derivative { alpha, io } => (frac_derivative(&read_function(io, Interp::Linear)?, *alpha)?, io),
        FracCmd::Kstar { hurst: h, io } => {
            let f = read_function(io, Interp::Linear)?;
            let h = hurst(*h)?;
            eprintln!("m_norm={:.16e}", m_norm(&f, h));
            (kstar(&f, h), io)
        }
    };
    let mut w = sink(&io_args.out)?;
    result.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn wiener(a: &WienerArgs) -> Out {
    let text = read_text(&a.integrand)?;
    let f = SampledFunction::read_csv(text.as_bytes(), Interp::Step)?;
    let grid = f.grid();
    let bp = grid.nodes();
    let pieces = (0..grid.n()).map(|i| f.values().row(i).iter().copied().collect()).collect();
    let step = SimpleFunction::new(bp, pieces)?;
    let h = hurst(a.hurst)?;
    let paths = sample_paths(grid, h, a.paths, a.seed.seed)?;
    let res = wiener_integral(&step, &paths)?;
    let mut w = sink(&a.out)?;
    write!(w, "path")?;
    for c in 0..step.dim() {
        write!(w, ",v_{c}")?;
    }
    writeln!(w)?;
    for (p, row) in res.samples.row_iter().enumerate() {
        write!(w, "{p}")?;
        for v in row.iter() {
            write!(w, ",{v:.16e}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    let mean: f64 = res.samples.iter().sum::<f64>() / res.samples.nrows() as f64;
    let second = res.empirical_second_moment();
    let z = (second - res.exact_second_moment) / res.stderr;
    eprintln!(
        "{{\"mean\": {mean:.10e}, \"var\": {second:.10e}, \"exact_var\": {:.10e}, \"z\": {z:.4}}}",
        res.exact_second_moment
    );
    if z.abs() > a.z {
        return Err(Failure::Check(format!("second moment off by z = {z:.3}")));
    }
    Ok(())
}

fn print_tail(r: &TailReport, what: &str) {
    println!("terms: {}", r.partial_sums.len());
    println!("partial_sum: {:.10e}", r.total());
    match r.exponent {
        Some(p) => println!("decay_exponent: {p:.6}"),
        None => println!("decay_exponent: none"),
    }
    if let Some(t) = r.tail_bound {
        println!("tail_bound: {t:.6e}");
    }
    println!("{what}: {}", r.verdict.label());
}

fn cyl(c: &CylCmd) -> Out {
    match c {
        CylCmd::Apply { config, functional, t, paths, out, hurst: h, seed } => {
            let spec = EmbeddingSpec::parse(&read_text(config)?)?;
            let e = spec.build()?;
            let hv = h.or(spec.hurst).ok_or_else(|| Failure::Usage("no Hurst parameter in flags or spec".into()))?;
            let seed = seed.or(spec.seed).unwrap_or(1);
            let u = match functional {
                Some(u) => u.clone(),
                None => {
                    let mut u = vec![0.0; e.dim()];
                    u[0] = 1.0;
                    u
                }
            };
            let grid = spec.grid()?;
            let qu = q_form(&e, &u, &u)?;
            let b = CylFbm::new(e, hurst(hv)?, grid, *paths, seed)?;
            let x = apply(&b, *t, &u)?;
            let mut w = sink(out)?;
            writeln!(w, "path,value")?;
            for (p, v) in x.iter().enumerate() {
                writeln!(w, "{p},{v:.16e}")?;
            }
            w.flush()?;
            let var = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
            eprintln!("{{\"var\": {var:.10e}, \"exact_var\": {:.10e}}}", qu * covariance(*t, *t, hurst(hv)?)?);
            Ok(())
        }
        CylCmd::Genuine { config, tail } => {
            let spec = EmbeddingSpec::parse(&read_text(config)?)?;
            let e = spec.build()?;
            print_tail(&is_genuine(&e, e.n_modes(), tail_rule(*tail)), "verdict");
            Ok(())
        }
    }
}

fn integrate(a: &IntegrateArgs) -> Out {
    let spec = PsiSpec::parse(&read_text(&a.psi_spec)?)?;
    let psi = spec.build()?;
    let h = hurst(a.hurst)?;
    let grid = psi.grid();
    let upto = a.upto.unwrap_or(grid.t_end());
    let target = if upto < grid.t_end() { psi.restricted(0.0, upto)? } else { psi.clone() };
    let q = covariance_q_psi(&target, h)?;
    let b = CylFbm::new(
        cylfbm::cylfbm::Embedding::diagonal(WeightRule::Power(0.0), psi.n_modes())?,
        h,
        grid,
        a.paths,
        a.seed.seed,
    )?;
    let z = simulate(&psi, &b, upto)?;
    let m = psi.m_v();
    let mut w = sink(&a.out)?;
    write!(w, "path")?;
    for j in 0..m {
        write!(w, ",v_{j}")?;
    }
    writeln!(w)?;
    for (p, row) in z.row_iter().enumerate() {
        write!(w, "{p}")?;
        for v in row.iter() {
            write!(w, ",{v:.16e}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    if let Some(path) = &a.cov_out {
        let mut c = BufWriter::new(File::create(path)?);
        writeln!(c, "i,j,exact,empirical")?;
        let n = z.nrows() as f64;
        for i in 0..m {
            for j in 0..m {
                let emp = z.column(i).dot(&z.column(j)) / n;
                writeln!(c, "{i},{j},{:.16e},{emp:.16e}", q[(i, j)])?;
            }
        }
        c.flush()?;
    }
    let report = hs_test(&target, h, m, TailRule::Fitted, None)?;
    eprintln!("hs_partial_sum: {:.10e}", report.total());
    eprintln!("hs_verdict: {}", report.verdict.label());
    Ok(())
}

fn heat(c: &HeatCmd) -> Out {
    match c {
        HeatCmd::Check { hurst: h, dim, modes, weight_power, tail } => {
            let h = hurst(*h)?;
            let model = SpectralModel::laplacian(*dim, &WeightRule::Power(*weight_power), *modes)?;
            let r = existence_criterion(&model, h, tail_rule(*tail))?;
            print_tail(&r.tail, "criterion");
            let hs = semigroup_hs_test(&model, h, 1.0, TailRule::Fitted)?;
            println!("hs_test: {}", hs.verdict.label());
            println!("verdict: {}", r.label());
            Ok(())
        }
        HeatCmd::Simulate { hurst: h, dim, modes, weight_power, grid, paths, seed, out } => {
            let h = hurst(*h)?;
            let model = SpectralModel::laplacian(*dim, &WeightRule::Power(*weight_power), *modes)?;
            let r = existence_criterion(&model, h, TailRule::Auto)?;
            if !r.exists() {
                eprintln!("warning: existence criterion is {}; simulating the truncation anyway", r.label());
            }
            let g = TimeGrid::new(grid.t_end, grid.grid_n)?;
            let paths = simulate_mild(&model, h, g, *paths, seed.seed)?;
            let mut w = sink(out)?;
            paths.write_csv(&mut w)?;
            w.flush()?;
            Ok(())
        }
        HeatCmd::Bounds { hurst: h, lambda, t_end } => {
            let h = hurst(*h)?;
            let mut failed = 0;
            for &l in lambda {
                let reports = match h.regime() {
                    Regime::High => vec![bound_check_high(l, h, *t_end)?],
                    Regime::Low => bound_check_low(l, h, *t_end)?,
                };
                for r in reports {
                    failed += usize::from(!r.holds());
                    println!(
                        "BOUND {} lambda={} value={:.9e} bound={:.9e} slack={:.9e} verdict={}",
                        r.name,
                        r.lambda,
                        r.value,
                        r.bound,
                        r.slack(),
                        if r.holds() { "holds" } else { "violated" }
                    );
                }
            }
            if failed > 0 {
                return Err(Failure::Check(format!("{failed} bounds violated")));
            }
            Ok(())
        }
    }
}
