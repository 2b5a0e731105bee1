use rayon::prelude::*;
use serde::Serialize;

use super::output::{derived_path, emit, json, Csv};
use super::{Format, RunConfig, Task};
use crate::greens::{GreensFunction, ScatterContext};
use crate::hamiltonian::{build_hamiltonian, rabi_vector};
use crate::materials::MaterialDb;
use crate::reflectivity::{feature_extract, uniform_grid, Pipeline};
use crate::spectral::{edge_report, eigensystem, non_normality, quasi_eigen_rabi};
use crate::stack::{build_stack, LayerStack};
use crate::topology::{extract_bulk, phase_diagram, winding_number, SweepSetup};
use crate::{Error, Result, C64};

/// Thinnest spacer for which the nearest-neighbour picture holds.
const MIN_SPACER_NM: f64 = 2.0;

fn load_db(cfg: &RunConfig) -> Result<MaterialDb> {
    match &cfg.file.materials {
        Some(p) => MaterialDb::load(p),
        None => Ok(MaterialDb::builtin()),
    }
}

struct Setup {
    stack: LayerStack,
    ctx: ScatterContext,
}

fn setup(cfg: &RunConfig) -> Result<Setup> {
    let db = load_db(cfg)?;
    let probe = cfg.file.probe.probe();
    let stack = build_stack(&cfg.file.stack, &db, probe.energy_kev)?;
    let ctx = ScatterContext::new(&stack, probe)?;
    Ok(Setup { stack, ctx })
}

/// Executes the configured task and writes its artifacts.
pub fn run(cfg: &RunConfig) -> Result<()> {
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = cfg.threads {
            b = b.num_threads(n);
        }
        b.build().map_err(|e| Error::validation("threads", e.to_string()))?
    };
    pool.install(|| match cfg.task {
        Task::GreensDump => greens_dump(cfg),
        Task::Hamiltonian => hamiltonian(cfg),
        Task::Eigen => eigen(cfg),
        Task::Winding => winding(cfg),
        Task::PhaseDiagram => phase(cfg),
        Task::Reflectivity => reflectivity(cfg),
        Task::DvSweep => dv_sweep(cfg),
        Task::Validate => {
            let d = validate(cfg);
            emit(cfg.out.as_deref(), &json(&d))?;
            match d.errors.first() {
                None => Ok(()),
                Some(first) => Err(Error::validation(first.field.clone(), first.message.clone())),
            }
        }
    })
}

/// Writes the primary artifact and, for CSV, the secondary ones next to it.
fn write(cfg: &RunConfig, primary: String, extra: Vec<(&str, &str, String)>) -> Result<()> {
    emit(cfg.out.as_deref(), &primary)?;
    for (infix, ext, content) in extra {
        match &cfg.out {
            Some(p) => emit(Some(&derived_path(p, infix, ext)), &content)?,
            None => emit(None, &content)?,
        }
    }
    Ok(())
}

fn pair(c: C64) -> [f64; 2] {
    [c.re, c.im]
}

fn greens_dump(cfg: &RunConfig) -> Result<()> {
    let s = setup(cfg)?;
    let g = GreensFunction::new(&s.stack, &s.ctx)?;
    let zs = &s.stack.resonant_layer_centers;
    let z_src = cfg.file.probe.z_src_nm;
    let step = cfg.file.sweep.field_step_nm;
    if !(step > 0.0) {
        return Err(Error::validation("sweep.field_step_nm", "must be > 0"));
    }
    let n_z = ((s.stack.total_thickness() + 10.0 - z_src) / step).floor() as usize + 1;
    let z_grid: Vec<f64> = (0..n_z).map(|i| z_src + i as f64 * step).collect();
    let field: Vec<C64> = z_grid.iter().map(|&z| g.cavity_field_at(z, z_src)).collect::<Result<_>>()?;
    let mut gm = vec![vec![C64::new(0.0, 0.0); zs.len()]; zs.len()];
    for (j, &a) in zs.iter().enumerate() {
        for (l, &b) in zs.iter().enumerate() {
            gm[j][l] = g.greens(a, b)?;
        }
    }
    match cfg.format {
        Format::Csv => {
            let mut c = Csv::new("greens-dump", &["row", "col", "re", "im"]);
            for (j, row) in gm.iter().enumerate() {
                for (l, v) in row.iter().enumerate() {
                    c.row(&[&(j + 1), &(l + 1), &v.re, &v.im]);
                }
            }
            let mut f = Csv::new("greens-dump field", &["z_nm", "re", "im"]);
            for (z, b) in z_grid.iter().zip(&field) {
                f.row(&[z, &b.re, &b.im]);
            }
            write(cfg, c.finish(), vec![("field", "csv", f.finish())])
        }
        Format::Json => {
            #[derive(Serialize)]
            struct Out {
                z_nm: Vec<f64>,
                greens_nm: Vec<Vec<[f64; 2]>>,
                z_src_nm: f64,
                field_z_nm: Vec<f64>,
                field: Vec<[f64; 2]>,
            }
            let out = Out {
                z_nm: zs.clone(),
                greens_nm: gm.iter().map(|r| r.iter().map(|&c| pair(c)).collect()).collect(),
                z_src_nm: z_src,
                field_z_nm: z_grid,
                field: field.into_iter().map(pair).collect(),
            };
            write(cfg, json(&out), vec![])
        }
    }
}

fn hamiltonian(cfg: &RunConfig) -> Result<()> {
    let s = setup(cfg)?;
    let h = build_hamiltonian(&s.stack, &s.ctx, 0.0)?;
    let w = rabi_vector(&s.stack, &s.ctx, cfg.file.probe.z_src_nm)?;
    let m = h.dim();
    match cfg.format {
        Format::Csv => {
            let mut c = Csv::new("hamiltonian", &["row", "col", "re", "im", "abs"]);
            for j in 0..m {
                for l in 0..m {
                    let v = h.matrix[(j, l)];
                    c.row(&[&(j + 1), &(l + 1), &v.re, &v.im, &v.norm()]);
                }
            }
            let mut r = Csv::new("hamiltonian rabi", &["layer", "re", "im", "abs"]);
            for (j, o) in w.omega.iter().enumerate() {
                r.row(&[&(j + 1), &o.re, &o.im, &o.norm()]);
            }
            write(cfg, c.finish(), vec![("rabi", "csv", r.finish())])
        }
        Format::Json => {
            #[derive(Serialize)]
            struct Out {
                units: &'static str,
                gamma0_ev: f64,
                kappa_per_nm: Vec<f64>,
                z_nm: Vec<f64>,
                matrix: Vec<Vec<[f64; 2]>>,
                abs: Vec<Vec<f64>>,
                rabi: Vec<[f64; 2]>,
                rabi_abs: Vec<f64>,
            }
            let out = Out {
                units: "Gamma0",
                gamma0_ev: h.gamma0_ev,
                kappa_per_nm: h.kappa.clone(),
                z_nm: h.positions.clone(),
                matrix: (0..m).map(|j| (0..m).map(|l| pair(h.matrix[(j, l)])).collect()).collect(),
                abs: (0..m).map(|j| (0..m).map(|l| h.matrix[(j, l)].norm()).collect()).collect(),
                rabi: w.omega.iter().map(|&c| pair(c)).collect(),
                rabi_abs: w.omega.iter().map(|c| c.norm()).collect(),
            };
            write(cfg, json(&out), vec![])
        }
    }
}

fn eigen(cfg: &RunConfig) -> Result<()> {
    let s = setup(cfg)?;
    let h = build_hamiltonian(&s.stack, &s.ctx, 0.0)?;
    let es = eigensystem(&h)?;
    let rep = edge_report(&es);
    match cfg.format {
        Format::Csv => {
            let mut c = Csv::new("eigen", &["index", "re", "im"]);
            for (j, l) in es.eigenvalues.iter().enumerate() {
                c.row(&[&(j + 1), &l.re, &l.im]);
            }
            let mut w = Csv::new("eigen weights", &["state", "layer", "weight"]);
            for (j, ws) in rep.weights.iter().enumerate() {
                for (l, x) in ws.iter().enumerate() {
                    w.row(&[&(j + 1), &(l + 1), x]);
                }
            }
            write(cfg, c.finish(), vec![("weights", "csv", w.finish())])
        }
        Format::Json => {
            let drive = rabi_vector(&s.stack, &s.ctx, cfg.file.probe.z_src_nm)?;
            let om = quasi_eigen_rabi(&es, &drive)?;
            #[derive(Serialize)]
            struct Out<'a> {
                eigenvalues: Vec<[f64; 2]>,
                biortho_norms: Vec<[f64; 2]>,
                exceptional: &'a [bool],
                max_residual: f64,
                omega_eig: Vec<[f64; 2]>,
                non_normality: f64,
                edge: &'a crate::spectral::EdgeReport,
            }
            let out = Out {
                eigenvalues: es.eigenvalues.iter().map(|&c| pair(c)).collect(),
                biortho_norms: es.biortho_norms.iter().map(|&c| pair(c)).collect(),
                exceptional: &es.exceptional,
                max_residual: es.max_residual(&h.matrix),
                omega_eig: om.iter().map(|&c| pair(c)).collect(),
                non_normality: non_normality(&om, &drive),
                edge: &rep,
            };
            write(cfg, json(&out), vec![])
        }
    }
}

fn sweep_setup<'a>(cfg: &'a RunConfig, db: &'a MaterialDb) -> SweepSetup<'a> {
    SweepSetup {
        template: &cfg.file.stack,
        db,
        probe: cfg.file.probe.probe(),
        range: cfg.file.sweep.bulk_range,
        n_k: cfg.file.sweep.n_k,
    }
}

const WINDING_COLUMNS: [&str; 6] = ["d_v", "d_w", "W_raw_re", "W_raw_im", "W_int", "flag"];

fn winding(cfg: &RunConfig) -> Result<()> {
    let s = setup(cfg)?;
    let h = build_hamiltonian(&s.stack, &s.ctx, 0.0)?;
    let bm = extract_bulk(&h, cfg.file.sweep.bulk_range)?;
    let w = winding_number(&bm, cfg.file.sweep.n_k)?;
    let (dv, dw) = (cfg.file.stack.d_v_nm, cfg.file.stack.d_w_nm);
    match cfg.format {
        Format::Csv => {
            let mut c = Csv::new("winding", &WINDING_COLUMNS);
            c.row(&[&dv, &dw, &w.raw.re, &w.raw.im, &w.integer, &w.flag()]);
            write(cfg, c.finish(), vec![])
        }
        Format::Json => {
            #[derive(Serialize)]
            struct Out<'a> {
                d_v_nm: f64,
                d_w_nm: f64,
                intracell_v: [f64; 2],
                intercell_w: [f64; 2],
                onsite_mean: [f64; 2],
                harmonics: Vec<Vec<Vec<[f64; 2]>>>,
                spread: Vec<Vec<Vec<f64>>>,
                result: &'a crate::topology::WindingResult,
                flag: &'a str,
            }
            let out = Out {
                d_v_nm: dv,
                d_w_nm: dw,
                intracell_v: pair(bm.intracell()),
                intercell_w: pair(bm.intercell()),
                onsite_mean: pair(bm.onsite_mean),
                harmonics: bm
                    .harmonics
                    .iter()
                    .map(|m| (0..2).map(|a| (0..2).map(|b| pair(m[(a, b)])).collect()).collect())
                    .collect(),
                spread: bm
                    .spread
                    .iter()
                    .map(|m| (0..2).map(|a| (0..2).map(|b| m[(a, b)]).collect()).collect())
                    .collect(),
                result: &w,
                flag: w.flag(),
            };
            write(cfg, json(&out), vec![])
        }
    }
}

fn phase(cfg: &RunConfig) -> Result<()> {
    let db = load_db(cfg)?;
    let sw = &cfg.file.sweep;
    let dv = uniform_grid(sw.dv_min_nm, sw.dv_max_nm, sw.dv_points);
    let dw = uniform_grid(sw.dw_min_nm, sw.dw_max_nm, sw.dw_points);
    let pts = phase_diagram(&sweep_setup(cfg, &db), &dv, &dw)?;
    match cfg.format {
        Format::Csv => {
            let mut c = Csv::new("phase-diagram", &WINDING_COLUMNS);
            for p in &pts {
                let w = &p.result;
                c.row(&[&p.d_v, &p.d_w, &w.raw.re, &w.raw.im, &w.integer, &w.flag()]);
            }
            write(cfg, c.finish(), vec![])
        }
        Format::Json => write(cfg, json(&pts), vec![]),
    }
}

fn reflectivity(cfg: &RunConfig) -> Result<()> {
    let s = setup(cfg)?;
    let p = Pipeline::new(&s.stack, &s.ctx, cfg.file.probe.z_src_nm)?;
    let sw = &cfg.file.sweep;
    let grid = uniform_grid(sw.detuning_min_gamma0, sw.detuning_max_gamma0, sw.detuning_points);
    let rs = p.spectrum(&grid)?;
    let features = feature_extract(&rs);
    match cfg.format {
        Format::Csv => {
            let mut c = Csv::new("reflectivity", &["delta_gamma0", "R", "re_amp", "im_amp"]);
            for ((d, r), a) in rs.delta.iter().zip(&rs.reflectivity).zip(&rs.amplitude) {
                c.row(&[d, r, &a.re, &a.im]);
            }
            write(cfg, c.finish(), vec![("features", "json", json(&features))])
        }
        Format::Json => {
            #[derive(Serialize)]
            struct Out<'a> {
                spectrum: &'a crate::reflectivity::ReflectivitySpectrum,
                features: &'a crate::reflectivity::FeatureReport,
            }
            write(cfg, json(&Out { spectrum: &rs, features: &features }), vec![])
        }
    }
}

fn dv_sweep(cfg: &RunConfig) -> Result<()> {
    let db = load_db(cfg)?;
    let setup = sweep_setup(cfg, &db);
    let sw = &cfg.file.sweep;
    let dw = cfg.file.stack.d_w_nm;
    let grid = uniform_grid(sw.dv_min_nm, sw.dv_max_nm, sw.dv_points);
    let rows: Vec<(f64, Vec<C64>)> = grid
        .par_iter()
        .map(|&dv| Ok((dv, eigensystem(&setup.hamiltonian(dv, dw)?)?.eigenvalues)))
        .collect::<Result<_>>()?;
    match cfg.format {
        Format::Csv => {
            let mut c = Csv::new("dv-sweep", &["d_v_nm", "dv_over_dw", "state", "re", "im"]);
            for (dv, ev) in &rows {
                for (j, l) in ev.iter().enumerate() {
                    c.row(&[dv, &(dv / dw), &(j + 1), &l.re, &l.im]);
                }
            }
            write(cfg, c.finish(), vec![])
        }
        Format::Json => {
            #[derive(Serialize)]
            struct Row {
                d_v_nm: f64,
                dv_over_dw: f64,
                eigenvalues: Vec<[f64; 2]>,
            }
            let out: Vec<Row> = rows
                .iter()
                .map(|(dv, ev)| Row {
                    d_v_nm: *dv,
                    dv_over_dw: dv / dw,
                    eigenvalues: ev.iter().map(|&c| pair(c)).collect(),
                })
                .collect();
            write(cfg, json(&out), vec![])
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub ok: bool,
    pub errors: Vec<Diagnostic>,
    pub warnings: Vec<Diagnostic>,
}

/// Dry-run checks of schema, ranges and referenced files.
pub fn validate(cfg: &RunConfig) -> Diagnostics {
    let mut d = Diagnostics::default();
    let mut err = |field: &str, message: String| d.errors.push(Diagnostic { field: field.into(), message });
    let f = &cfg.file;

    let db = match load_db(cfg) {
        Ok(db) => Some(db),
        Err(e) => {
            err("materials", e.to_string());
            None
        }
    };
    if let Err(e) = f.stack.validate() {
        err(field_of(&e).unwrap_or("stack"), e.to_string());
    }
    if let Some(db) = &db {
        match build_stack(&f.stack, db, f.probe.energy_kev) {
            Ok(stack) => {
                if stack.resonant_count() == 0 {
                    err("stack.core", "no resonant layer in the cavity core".into());
                }
                if let Err(e) = ScatterContext::new(&stack, f.probe.probe()) {
                    err(field_of(&e).unwrap_or("probe"), e.to_string());
                }
            }
            Err(e) if f.stack.validate().is_ok() => err("stack", e.to_string()),
            Err(_) => {}
        }
    }
    if !(f.probe.z_src_nm < 0.0) {
        err("probe.z_src_nm", "source must lie above the stack (z < 0)".into());
    }
    let sw = &f.sweep;
    if sw.n_k < 4 {
        err("sweep.n_k", "need at least 4 k-points".into());
    }
    if sw.detuning_points < 2 || !(sw.detuning_max_gamma0 > sw.detuning_min_gamma0) {
        err("sweep.detuning_*", "need an increasing detuning range with >= 2 points".into());
    }

    let mut warn = |field: &str, message: String| d.warnings.push(Diagnostic { field: field.into(), message });
    let thin = |x: f64| x < MIN_SPACER_NM;
    if f.stack.n_cavities >= 2 && thin(f.stack.d_v_nm) {
        warn("stack.d_v_nm", format!("{} nm < 2 nm: long-range couplings become strong", f.stack.d_v_nm));
    }
    if f.stack.n_cavities >= 3 && thin(f.stack.d_w_nm) {
        warn("stack.d_w_nm", format!("{} nm < 2 nm: long-range couplings become strong", f.stack.d_w_nm));
    }
    if matches!(cfg.task, Task::PhaseDiagram | Task::DvSweep) && thin(sw.dv_min_nm) {
        warn("sweep.dv_min_nm", format!("sweep reaches {} nm < 2 nm", sw.dv_min_nm));
    }
    if cfg.task == Task::PhaseDiagram && thin(sw.dw_min_nm) {
        warn("sweep.dw_min_nm", format!("sweep reaches {} nm < 2 nm", sw.dw_min_nm));
    }
    if matches!(cfg.task, Task::Winding | Task::PhaseDiagram) && f.stack.n_cavities < 8 {
        warn("stack.n_cavities", "bulk extraction needs at least 8 cavities".into());
    }
    d.ok = d.errors.is_empty();
    d
}

fn field_of(e: &Error) -> Option<&str> {
    match e {
        Error::Validation { field, .. } => Some(field),
        _ => None,
    }
}
