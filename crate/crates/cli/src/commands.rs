use std::io::Write;

use liftsvd_core::certify::{certify_suite, Certificate};
use liftsvd_core::factor::{compose_k, nullspace_relaxation_sample, random_unitary, KFactorization};
use liftsvd_core::lift::{Decomposition, LiftedPoint};
use liftsvd_core::norms::{estimate_all, validate_bounds, NormEstimate};
use liftsvd_core::sampling::{certificate_points, linspace};
use log::{debug, info};
use serde::Serialize;

use crate::config::{OutputFormat, RunConfig};
use crate::formats::{
    create_file, write_json, write_lifted_points_csv, write_optional_csv, write_vectors_csv, DecompositionRecord,
};
use crate::{CliError, EXIT_BOUND_VIOLATION, EXIT_CERTIFICATE_FAILED, EXIT_OK};

pub const FIG2_POINTS: usize = 2001;
pub const FIG3_POINTS: usize = 201;
pub const DEFAULT_NULL_TOL: f64 = 1e-3;

pub const FIG2_HEADER: [&str; 7] = ["x", "f", "reconstruction", "envelope_upper", "envelope_lower", "v_1", "v_2"];
pub const FIG3_HEADER: [&str; 6] = ["x_1", "x_2", "f", "proj_1", "proj_2", "proj_3"];

fn decomposition(cfg: &RunConfig) -> Result<Decomposition, CliError> {
    let f = cfg.load_function()?;
    info!("loaded function with n = {}, p = {}", f.n(), f.p());
    Ok(Decomposition::new(f, cfg.eta)?)
}

/// Lifts `x`, mapping singular points of `f` to `None`.
fn lift_defined(dec: &Decomposition, x: &[f64]) -> Result<Option<LiftedPoint>, CliError> {
    match dec.lift(x) {
        Ok(lp) => Ok(Some(lp)),
        Err(e) if e.is_domain_error() => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn print_witness(out: &mut impl Write, err: &CliError) {
    if let CliError::BoundViolation { witness, s } = err {
        let _ = writeln!(out, "bound violation: S = {s} at x = {witness:?}");
    }
}

pub fn cmd_decompose(cfg: &RunConfig, null_tol: f64, out: &mut impl Write) -> Result<u8, CliError> {
    let dec = decomposition(cfg)?;
    cfg.ensure_out_dir()?;
    let record = DecompositionRecord::from_decomposition(&dec);
    write_json(&cfg.out_path("decomposition.json"), &record)?;

    let sigma = dec.sigma_spec();
    let sum = sigma.admissibility_sum(dec.function().norm_bounds());
    let _ = writeln!(out, "sigma: {:?}", sigma.sigma());
    let _ = writeln!(out, "admissibility sum: {sum:?} (target {:?})", 1.0 - sigma.eta());
    let _ = writeln!(out, "m: {}", dec.m());
    let _ = writeln!(out, "ordering: {:?}", sigma.ordering().perm());

    let points = certificate_points(dec.function().domain_box(), cfg.samples, cfg.seed);
    let mut lifted = Vec::with_capacity(points.len());
    for x in &points {
        match lift_defined(&dec, x) {
            Ok(Some(lp)) => lifted.push(lp),
            Ok(None) => debug!("skipping singular point {x:?}"),
            Err(e) => {
                print_witness(out, &e);
                return Err(e);
            }
        }
    }
    info!("lifted {} of {} sample points", lifted.len(), points.len());
    match cfg.format {
        OutputFormat::Csv => {
            let file = create_file(&cfg.out_path("lifted_points.csv"))?;
            write_lifted_points_csv(file, dec.n(), dec.p(), dec.m(), &lifted)?;
        }
        OutputFormat::Json => write_json(&cfg.out_path("lifted_points.json"), &lifted)?,
    }

    let kf = compose_k(&dec, random_unitary(dec.m(), cfg.seed))?;
    write_json(&cfg.out_path("k_factorization.json"), &kf.record())?;
    let null = nullspace_relaxation_sample(&kf, cfg.samples, null_tol, cfg.seed)?;
    let _ = writeln!(out, "relaxed null set: {} of {} samples within tol {null_tol:?}", null.len(), cfg.samples);
    match cfg.format {
        OutputFormat::Csv => {
            let header: Vec<String> = (1..=dec.n()).map(|i| format!("x_{i}")).collect();
            write_vectors_csv(create_file(&cfg.out_path("null_samples.csv"))?, &header, &null)?;
        }
        OutputFormat::Json => write_json(&cfg.out_path("null_samples.json"), &null)?,
    }
    Ok(EXIT_OK)
}

pub fn run_certificates(cfg: &RunConfig) -> Result<Vec<Certificate>, CliError> {
    let dec = decomposition(cfg)?;
    Ok(certify_suite(&dec, cfg.samples, cfg.seed)?)
}

pub fn cmd_certify(cfg: &RunConfig, out: &mut impl Write) -> Result<u8, CliError> {
    let certs = match run_certificates(cfg) {
        Ok(c) => c,
        Err(e) => {
            print_witness(out, &e);
            return Err(e);
        }
    };
    cfg.ensure_out_dir()?;
    write_json(&cfg.out_path("certificates.json"), &certs)?;
    Ok(report_certificates(&certs, out))
}

/// Prints one line per certificate and maps the outcome to an exit code.
pub fn report_certificates(certs: &[Certificate], out: &mut impl Write) -> u8 {
    for c in certs {
        let status = if c.pass { "PASS" } else { "FAIL" };
        let _ = writeln!(
            out,
            "{status} {}: max violation {:e} (threshold {:e}, {} samples)",
            c.name, c.max_violation, c.threshold, c.samples
        );
        if !c.pass {
            if let Some(w) = &c.witness {
                let _ = writeln!(out, "  witness: {w:?}");
            }
        }
    }
    if certs.iter().all(|c| c.pass) {
        EXIT_OK
    } else {
        EXIT_CERTIFICATE_FAILED
    }
}

pub fn cmd_estimate_norms(cfg: &RunConfig, restarts: usize, out: &mut impl Write) -> Result<u8, CliError> {
    let f = cfg.load_function()?;
    let estimates: Vec<NormEstimate> =
        estimate_all(&f, cfg.samples, restarts, cfg.seed).map_err(|e| CliError::Computation(e.to_string()))?;
    let violations = validate_bounds(&f, &estimates).map_err(|e| CliError::Computation(e.to_string()))?;
    cfg.ensure_out_dir()?;
    write_json(&cfg.out_path("norm_estimates.json"), &estimates)?;
    for e in &estimates {
        let _ = writeln!(
            out,
            "component {}: lower bound {:?}, declared {:?}",
            e.component + 1,
            e.lower_bound,
            e.declared_bound
        );
    }
    if violations.is_empty() {
        return Ok(EXIT_OK);
    }
    for v in &violations {
        let _ = writeln!(
            out,
            "bound violation: component {} reaches {:?} > {:?} at x = {:?}",
            v.component + 1,
            v.lower_bound,
            v.declared_bound,
            v.witness
        );
    }
    Ok(EXIT_BOUND_VIOLATION)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig2Row {
    pub x: f64,
    pub f: Option<f64>,
    pub reconstruction: Option<f64>,
    pub envelope_upper: f64,
    pub envelope_lower: f64,
    pub v_1: Option<f64>,
    pub v_2: Option<f64>,
}

impl Fig2Row {
    fn cells(&self) -> Vec<Option<f64>> {
        vec![
            Some(self.x),
            self.f,
            self.reconstruction,
            Some(self.envelope_upper),
            Some(self.envelope_lower),
            self.v_1,
            self.v_2,
        ]
    }
}

pub fn fig2_rows(dec: &Decomposition) -> Result<Vec<Fig2Row>, CliError> {
    if dec.n() != 1 || dec.p() != 1 {
        return Err(CliError::Config(format!("fig2 needs n = 1 and p = 1, got n = {}, p = {}", dec.n(), dec.p())));
    }
    let [lo, hi] = dec.function().domain_box()[0];
    let sigma_1 = dec.sigma_spec().sigma_max();
    linspace(lo, hi, FIG2_POINTS)
        .into_iter()
        .map(|x| {
            let env = sigma_1 * x.abs();
            let lp = lift_defined(dec, &[x])?;
            Ok(Fig2Row {
                x,
                f: lp.as_ref().map(|l| l.fx[0]),
                reconstruction: lp.as_ref().map(|l| dec.reconstruct(l)[0]),
                envelope_upper: env,
                envelope_lower: -env,
                v_1: lp.as_ref().map(|l| l.v[0]),
                v_2: lp.as_ref().map(|l| l.v[1]),
            })
        })
        .collect()
}

pub fn cmd_fig2(cfg: &RunConfig, out: &mut impl Write) -> Result<u8, CliError> {
    let dec = decomposition(cfg)?;
    let rows = match fig2_rows(&dec) {
        Ok(r) => r,
        Err(e) => {
            print_witness(out, &e);
            return Err(e);
        }
    };
    cfg.ensure_out_dir()?;
    let name = write_rows(cfg, "fig2", &FIG2_HEADER, &rows, Fig2Row::cells)?;
    let _ = writeln!(out, "wrote {} rows to {name}", rows.len());
    Ok(EXIT_OK)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig3Row {
    pub x_1: f64,
    pub x_2: f64,
    pub f: Option<f64>,
    pub proj_1: Option<f64>,
    pub proj_2: Option<f64>,
    pub proj_3: Option<f64>,
}

impl Fig3Row {
    fn cells(&self) -> Vec<Option<f64>> {
        vec![Some(self.x_1), Some(self.x_2), self.f, self.proj_1, self.proj_2, self.proj_3]
    }
}

/// Coordinates of `g(x)` in the basis of right singular vectors, i.e. `V* g(x)`.
fn projections(kf: &KFactorization, x: &[f64]) -> Result<Option<Vec<f64>>, CliError> {
    let g = match kf.g(x) {
        Ok(g) => g,
        Err(e) if e.is_domain_error() => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let vs = kf.vstar().matrix();
    Ok(Some((0..vs.nrows()).map(|r| (0..vs.ncols()).map(|c| vs[(r, c)] * g[c]).sum()).collect()))
}

pub fn fig3_rows(dec: &Decomposition, seed: u64) -> Result<Vec<Fig3Row>, CliError> {
    if dec.n() != 2 || dec.p() != 1 {
        return Err(CliError::Config(format!("fig3 needs n = 2 and p = 1, got n = {}, p = {}", dec.n(), dec.p())));
    }
    let kf = compose_k(dec, random_unitary(dec.m(), seed))?;
    let bx = dec.function().domain_box();
    let g1 = linspace(bx[0][0], bx[0][1], FIG3_POINTS);
    let g2 = linspace(bx[1][0], bx[1][1], FIG3_POINTS);
    let mut rows = Vec::with_capacity(g1.len() * g2.len());
    for &x_1 in &g1 {
        for &x_2 in &g2 {
            let x = [x_1, x_2];
            let defined = x_1 != 0.0 && x_2 != 0.0;
            let (f, proj) = if defined {
                match dec.function().eval_f(&x) {
                    Ok(fx) => (Some(fx[0]), projections(&kf, &x)?),
                    Err(_) => (None, None),
                }
            } else {
                (None, None)
            };
            let p = |i: usize| proj.as_ref().map(|v| v[i]);
            rows.push(Fig3Row { x_1, x_2, f, proj_1: p(0), proj_2: p(1), proj_3: p(2) });
        }
    }
    Ok(rows)
}

pub fn cmd_fig3(cfg: &RunConfig, out: &mut impl Write) -> Result<u8, CliError> {
    let dec = decomposition(cfg)?;
    let rows = match fig3_rows(&dec, cfg.seed) {
        Ok(r) => r,
        Err(e) => {
            print_witness(out, &e);
            return Err(e);
        }
    };
    cfg.ensure_out_dir()?;
    let name = write_rows(cfg, "fig3", &FIG3_HEADER, &rows, Fig3Row::cells)?;
    let _ = writeln!(out, "wrote {} rows to {name}", rows.len());
    Ok(EXIT_OK)
}

fn write_rows<T: Serialize>(
    cfg: &RunConfig,
    stem: &str,
    header: &[&str],
    rows: &[T],
    cells: fn(&T) -> Vec<Option<f64>>,
) -> Result<String, CliError> {
    let name = match cfg.format {
        OutputFormat::Csv => format!("{stem}.csv"),
        OutputFormat::Json => format!("{stem}.json"),
    };
    let path = cfg.out_path(&name);
    match cfg.format {
        OutputFormat::Csv => {
            let table: Vec<Vec<Option<f64>>> = rows.iter().map(cells).collect();
            write_optional_csv(create_file(&path)?, header, &table)?;
        }
        OutputFormat::Json => write_json(&path, rows)?,
    }
    Ok(path.display().to_string())
}
