use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use qpspectra::cocycles::{complexified_le, dual_cocycle, longrange_cocycle, lyapunov_exponents, Cocycle, LeOptions};
use qpspectra::gaps::{gaps_at_phase, hausdorff, holder_experiment, spectrum_gaps, BandStructure};
use qpspectra::lagrangian::{rotation_number, LagrangianFrame};
use qpspectra::linalg::CMat;
use qpspectra::operators::{aubry_dual, floquet_at_phase, ids, Rational};
use qpspectra::splitting::{
    block_diagonalize, center_exponents, invariant_bundles, parallel_transport, BundleOptions, Dims,
    TransportOptions,
};
use qpspectra::verify::{run_suite, Suite};
use rayon::prelude::*;
use serde_json::json;

use crate::config::{CocycleChoice, RunConfig};
use crate::CliError;

type Res<T> = Result<T, CliError>;

pub fn run(cfg: &RunConfig) -> Res<Vec<PathBuf>> {
    std::fs::create_dir_all(&cfg.out)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", cfg.out.display())))?;
    let mut written = vec![write_json(&cfg.out.join("resolved_config.json"), &serde_json::to_value(cfg).expect("serializes"))?];
    let out = &cfg.out;
    written.extend(match cfg.command.as_str() {
        "spectrum" => spectrum(cfg, out)?,
        "ids" => ids_cmd(cfg, out)?,
        "lyapunov" => lyapunov(cfg, out)?,
        "acceleration" => acceleration(cfg, out)?,
        "rotation" => rotation(cfg, out)?,
        "gaps" => gaps(cfg, out)?,
        "splitting" => splitting(cfg, out)?,
        "blockdiag" => blockdiag(cfg, out)?,
        "transport" => transport(cfg, out)?,
        "duality-check" => duality(cfg, out)?,
        "holder" => holder(cfg, out)?,
        "verify" => verify(cfg, out)?,
        other => return Err(CliError::Config(format!("unknown subcommand '{other}'"))),
    });
    Ok(written)
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Res<PathBuf> {
    let csv_err = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    w.flush().map_err(io(path))?;
    Ok(path.to_path_buf())
}

fn write_json(path: &Path, v: &serde_json::Value) -> Res<PathBuf> {
    let mut text = serde_json::to_string_pretty(v).expect("serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(io(path))?;
    Ok(path.to_path_buf())
}

/// Row-major complex entries as little-endian `(re, im)` doubles.
fn dump_frames<'a>(path: &Path, frames: impl Iterator<Item = &'a CMat>) -> Res<PathBuf> {
    let mut w = BufWriter::new(File::create(path).map_err(io(path))?);
    for m in frames {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                w.write_all(&m[(i, j)].re.to_le_bytes()).map_err(io(path))?;
                w.write_all(&m[(i, j)].im.to_le_bytes()).map_err(io(path))?;
            }
        }
    }
    w.flush().map_err(io(path))?;
    Ok(path.to_path_buf())
}

/// Shortest round-trip form, in exponent notation far from unit scale.
fn f(x: f64) -> String {
    if x == 0.0 || !x.is_finite() || (1e-4..1e15).contains(&x.abs()) {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

fn matrix_json(m: &CMat) -> serde_json::Value {
    json!((0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect::<Vec<_>>())
        .collect::<Vec<_>>())
}

fn cocycle(cfg: &RunConfig, e: f64) -> Res<Cocycle> {
    let freq = cfg.frequency()?;
    Ok(match cfg.cocycle.expect("resolved") {
        CocycleChoice::Longrange => longrange_cocycle(&cfg.hopping, &cfg.potential, e, freq)?,
        CocycleChoice::Dual => dual_cocycle(&cfg.hopping, &cfg.potential, e, freq)?,
    })
}

fn x_of(cfg: &RunConfig) -> f64 {
    cfg.x.unwrap_or(0.0)
}

/// Phases `i/x_grid` on the whole circle.
fn circle_grid(cfg: &RunConfig) -> Vec<f64> {
    (0..cfg.x_grid).map(|i| i as f64 / cfg.x_grid as f64).collect()
}

fn bundle_opts(cfg: &RunConfig) -> BundleOptions {
    BundleOptions { tol: cfg.tol("bundle"), ..BundleOptions::default() }
}

/// Per-phase Bloch band edges of each approximant (the butterfly) and the
/// merged bands of the union spectrum.
fn spectrum(cfg: &RunConfig, out: &Path) -> Res<Vec<PathBuf>> {
    let (v, w) = (&cfg.hopping, &cfg.potential);
    let mut cloud = Vec::new();
    let mut bands = Vec::new();
    for pq in cfg.rationals()? {
        let q = pq.q as usize;
        let xs: Vec<f64> = (0..cfg.x_grid).map(|i| i as f64 / (q * cfg.x_grid) as f64).collect();
        let per_x: Vec<Vec<(f64, f64)>> = xs
            .par_iter()
            .map(|&x| floquet_at_phase(v, w, pq, x, cfg.bloch_grid).map(|fs| fs.index_bands))
            .collect::<qpspectra::Result<_>>()?;
        for edges in per_x {
            for (lo, hi) in edges {
                cloud.push(vec![pq.p.to_string(), pq.q.to_string(), f(lo)]);
                cloud.push(vec![pq.p.to_string(), pq.q.to_string(), f(hi)]);
            }
        }
        for (lo, hi) in spectrum_gaps(v, w, pq, cfg.x_grid, cfg.bloch_grid)?.bands {
            bands.push(vec![pq.p.to_string(), pq.q.to_string(), f(lo), f(hi)]);
        }
    }
    Ok(vec![
        write_csv(&out.join("butterfly.csv"), &["p", "q", "E"], &cloud)?,
        write_csv(&out.join("bands.csv"), &["p", "q", "band_lo", "band_hi"], &bands)?,
    ])
}

fn ids_cmd(cfg: &RunConfig, out: &Path) -> Res<Vec<PathBuf>> {
    let freq = cfg.frequency()?;
    let m = cfg.samples.expect("resolved");
    let rows: Vec<Vec<String>> = cfg
        .grid()
        .par_iter()
        .map(|&e| ids(&cfg.hopping, &cfg.potential, &freq, e, cfg.volume, m).map(|r| vec![f(e), f(r.value)]))
        .collect::<qpspectra::Result<_>>()?;
    Ok(vec![write_csv(&out.join("ids.csv"), &["E", "ids"], &rows)?])
}

fn lyapunov(cfg: &RunConfig, out: &Path) -> Res<Vec<PathBuf>> {
    let eps = cfg.eps.clone().expect("resolved");
    let work: Vec<(f64, f64)> = cfg.grid().into_iter().flat_map(|e| eps.iter().map(move |&s| (e, s))).collect();
    let reports = work
        .par_iter()
        .map(|&(e, s)| {
            let c = cocycle(cfg, e)?;
            let rep = lyapunov_exponents(&c, cfg.iterations.expect("resolved"), cfg.samples.expect("resolved"), s)?;
            Ok((c.half_dim().max(1), rep))
        })
        .collect::<Res<Vec<_>>>()?;
    let mut sums = Vec::new();
    let mut all = Vec::new();
    for (&(e, s), (m, rep)) in work.iter().zip(&reports) {
        sums.push(vec![f(e), f(s), f(rep.exponents[..*m].iter().sum())]);
        for (i, (l, se)) in rep.exponents.iter().zip(&rep.stderr).enumerate() {
            all.push(vec![f(e), f(s), (i + 1).to_string(), f(*l), f(*se)]);
        }
    }
    Ok(vec![
        write_csv(&out.join("lyapunov.csv"), &["E", "eps", "L_eps"], &sums)?,
        write_csv(&out.join("lyapunov_exponents.csv"), &["E", "eps", "index", "exponent", "stderr"], &all)?,
    ])
}

fn acceleration(cfg: &RunConfig, out: &Path) -> Res<Vec<PathBuf>> {
    let opts = LeOptions { n: cfg.iterations.expect("resolved"), x_samples: cfg.samples.expect("resolved") };
    let eps = cfg.eps.clone().expect("resolved");
    let grid = cfg.grid();
    let reports = grid
        .par_iter()
        .map(|&e| Ok(complexified_le(&cocycle(cfg, e)?, &eps, &opts)?))
        .collect::<Res<Vec<_>>>()?;
    let mut summary = Vec::new();
    let mut profile = Vec::new();
    for (&e, rep) in grid.iter().zip(&reports) {
        summary.push(vec![f(e), rep.omega.to_string(), f(rep.residual)]);
        for (s, l) in rep.eps_grid.iter().zip(&rep.l_eps) {
            profile.push(vec![f(e), f(*s), f(*l)]);
        }
    }
    Ok(vec![
        write_csv(&out.join("acceleration.csv"), &["E", "omega", "residual"], &summary)?,
        write_csv(&out.join("acceleration_profile.csv"), &["E", "eps", "L_eps"], &profile)?,
    ])
}

fn rotation(cfg: &RunConfig, out: &Path) -> Res<Vec<PathBuf>> {
    let rows = cfg
        .grid()
        .par_iter()
        .map(|&e| {
            let c = cocycle(cfg, e)?;
            let form = c.form.as_ref().ok_or_else(|| CliError::Numeric("cocycle carries no symplectic form".into()))?;
            let r = rotation_number(&c, x_of(cfg), cfg.iterations.expect("resolved"), &LagrangianFrame::horizontal(form))?;
            Ok(vec![f(e), f(r.rho), f(r.err)])
        })
        .collect::<Res<Vec<_>>>()?;
    Ok(vec![write_csv(&out.join("rotation.csv"), &["E", "rho", "err"], &rows)?])
}

/// Labeled gaps of the union spectrum, or of the spectrum at one phase when `x` is set.
fn gaps(cfg: &RunConfig, out: &Path) -> Res<Vec<PathBuf>> {
    let (v, w) = (&cfg.hopping, &cfg.potential);
    let structures = cfg
        .rationals()?
        .par_iter()
        .map(|&pq| match cfg.x {
            Some(x) => gaps_at_phase(v, w, pq, x, cfg.bloch_grid),
            None => spectrum_gaps(v, w, pq, cfg.x_grid, cfg.bloch_grid),
        })
        .collect::<qpspectra::Result<Vec<BandStructure>>>()?;
    let x = cfg.x.map(f).unwrap_or_default();
    let rows: Vec<Vec<String>> = structures
        .iter()
        .flat_map(|bs| {
            bs.gaps.iter().map(|g| {
                vec![
                    bs.q.to_string(),
                    bs.p.to_string(),
                    x.clone(),
                    g.ell.to_string(),
                    g.k.map(|k| k.to_string()).unwrap_or_default(),
                    f(g.lo),
                    f(g.hi),
                    f(g.width()),
                ]
            })
        })
        .collect();
    Ok(vec![write_csv(&out.join("gaps.csv"), &["q", "p", "x", "ell", "k", "E_lo", "E_hi", "width"], &rows)?])
}

fn splitting(cfg: &RunConfig, out: &Path) -> Res<Vec<PathBuf>> {
    let xs = circle_grid(cfg);
    let opts = bundle_opts(cfg);
    let mut entries = Vec::new();
    let mut frames = Vec::new();
    for e in cfg.grid() {
        let c = cocycle(cfg, e)?;
        let dims = Dims::center_two(c.dim);
        let per = xs
            .par_iter()
            .map(|&x| invariant_bundles(&c, &[x], dims, &opts))
            .collect::<qpspectra::Result<Vec<_>>>()?;
        let phases: Vec<_> = per
            .iter()
            .map(|sp| json!({ "x": sp.x_grid[0], "invariance_residual": sp.invariance_residual, "condition": sp.condition }))
            .collect();
        entries.push(json!({
            "E": e,
            "dims": dims,
            "exponents": per[0].exponents,
            "invariance_residual": per.iter().map(|s| s.invariance_residual).fold(0.0, f64::max),
            "condition": per.iter().map(|s| s.condition).fold(0.0, f64::max),
            "iterations": per.iter().map(|s| s.iterations).max().unwrap_or(0),
            "phases": phases,
        }));
        for sp in &per {
            frames.push(qpspectra::linalg::hstack(&qpspectra::linalg::hstack(&sp.eu[0], &sp.ec[0]), &sp.es[0]));
        }
    }
    let mut written = vec![write_json(
        &out.join("splitting.json"),
        &json!({ "frames_layout": "per E, per x: [E^u E^c E^s] row-major", "energies": entries }),
    )?];
    if cfg.dump_frames {
        written.push(dump_frames(&out.join("splitting_frames.bin"), frames.iter())?);
    }
    Ok(written)
}

fn blockdiag(cfg: &RunConfig, out: &Path) -> Res<Vec<PathBuf>> {
    let xs = circle_grid(cfg);
    let opts = bundle_opts(cfg);
    let mut entries = Vec::new();
    let mut frames = Vec::new();
    for e in cfg.grid() {
        let c = cocycle(cfg, e)?;
        let dims = Dims::center_two(c.dim);
        let bd = block_diagonalize(&c, &xs, dims, &opts, cfg.tol("coupling"))?;
        let phases: Vec<_> = bd
            .xs
            .iter()
            .zip(&bd.coupling_per_x)
            .zip(&bd.center)
            .map(|((x, k), m)| json!({ "x": x, "coupling": k, "center": matrix_json(m) }))
            .collect();
        entries.push(json!({
            "E": e,
            "dims": dims,
            "coupling": bd.coupling,
            "form_residual": bd.form_residual,
            "center_exponents": center_exponents(&bd),
            "phases": phases,
        }));
        frames.extend(bd.b);
    }
    let mut written = vec![write_json(
        &out.join("blockdiag.json"),
        &json!({ "frames_layout": "per E, per x: B(x) row-major", "energies": entries }),
    )?];
    if cfg.dump_frames {
        written.push(dump_frames(&out.join("blockdiag_frames.bin"), frames.iter())?);
    }
    Ok(written)
}

/// Center-frame holonomy over `[E_lo, E_hi]` at phase `x`.
fn transport(cfg: &RunConfig, out: &Path) -> Res<Vec<PathBuf>> {
    let g = cfg.energies.expect("resolved");
    let family = |t: f64| -> qpspectra::Result<Cocycle> {
        cocycle(cfg, t).map_err(|e| match e {
            CliError::Core(e) => e,
            other => qpspectra::Error::InvalidInput(other.to_string()),
        })
    };
    let dims = Dims::center_two(family(g.lo)?.dim);
    let opts = TransportOptions {
        initial_steps: cfg.transport_steps,
        floor: cfg.tol("step_floor"),
        bundles: bundle_opts(cfg),
        ..TransportOptions::default()
    };
    let hol = parallel_transport(&family, g.lo, g.hi, x_of(cfg), dims, &opts)?;
    let rows: Vec<Vec<String>> = hol
        .energies
        .iter()
        .zip(&hol.r_total)
        .map(|(e, r)| vec![f(*e), f(qpspectra::linalg::norm2(r).ln())])
        .collect();
    let mut doc = serde_json::to_value(&hol).expect("serializes");
    doc["endpoint"] = matrix_json(hol.endpoint());
    Ok(vec![
        write_json(&out.join("holonomy.json"), &doc)?,
        write_csv(&out.join("holonomy.csv"), &["E", "log_norm"], &rows)?,
    ])
}

/// Hausdorff distance between the union spectra of an operator and its Aubry dual.
fn duality(cfg: &RunConfig, out: &Path) -> Res<Vec<PathBuf>> {
    let (v, w) = (&cfg.hopping, &cfg.potential);
    let (dv, dw) = aubry_dual(v, w);
    let rows = cfg
        .rationals()?
        .par_iter()
        .map(|&pq| {
            let a = spectrum_gaps(v, w, pq, cfg.x_grid, cfg.bloch_grid)?;
            let b = spectrum_gaps(&dv, &dw, pq, cfg.x_grid, cfg.bloch_grid)?;
            Ok(vec![
                pq.p.to_string(),
                pq.q.to_string(),
                f(hausdorff(&a.bands, &b.bands)),
                f(a.resolution.max(b.resolution)),
            ])
        })
        .collect::<qpspectra::Result<Vec<_>>>()?;
    Ok(vec![write_csv(&out.join("duality.csv"), &["p", "q", "hausdorff", "resolution"], &rows)?])
}

/// Consecutive pairs of the frequency list.
fn holder(cfg: &RunConfig, out: &Path) -> Res<Vec<PathBuf>> {
    let list = cfg.rationals()?;
    if list.len() < 2 {
        return Err(CliError::Config("holder needs at least two frequencies (--alpha-convergents N, N ≥ 2)".into()));
    }
    let pairs: Vec<(Rational, Rational)> = list.windows(2).map(|p| (p[0], p[1])).collect();
    let rows: Vec<Vec<String>> = holder_experiment(&cfg.hopping, &cfg.potential, &pairs, cfg.x_grid, cfg.bloch_grid)?
        .iter()
        .map(|r| vec![f(r.alpha1), f(r.alpha2), f(r.hausdorff), f(r.ratio)])
        .collect();
    Ok(vec![write_csv(&out.join("holder.csv"), &["alpha1", "alpha2", "hausdorff", "ratio"], &rows)?])
}

fn verify(cfg: &RunConfig, out: &Path) -> Res<Vec<PathBuf>> {
    let results = run_suite(Suite::parse(&cfg.suite)?, cfg.seed);
    for r in &results {
        println!("{}", r.line());
    }
    // timings stay on the terminal so the file is reproducible
    let doc: Vec<_> = results
        .iter()
        .map(|r| json!({ "id": r.id, "name": r.name, "passed": r.passed, "detail": r.detail }))
        .collect();
    let path = write_json(&out.join("verify.json"), &json!({ "suite": cfg.suite, "seed": cfg.seed, "criteria": doc }))?;
    let failed: Vec<usize> = results.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    if !failed.is_empty() {
        return Err(CliError::Tolerance(format!("criteria failed: {failed:?}")));
    }
    Ok(vec![path])
}
