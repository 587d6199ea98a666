//! Numerical checks of the adiabatic elimination of the shutter mode `b` and
//! then the heralding mode `h`.
//!
//! With `zeta = g / kappa_sc`, the full density matrix is expanded over the
//! shutter's lowest three levels, `rho = sum_ij rho_ij (x) |i><j|`. In the
//! deep regime the blocks satisfy
//! `rho_20 ~ -i sqrt2 zeta a_h rho_10` and
//! `rho_10 ~ -2i zeta (a_h rho_00 - rho_11 a_h)`.
//! Eliminating `b` leaves `H = Lambda (a_e a_h + h.c.)`, `L = sqrt(Omega) a_h`
//! with `Omega = 4 g^2 / kappa_sc`; eliminating `h` leaves `L = sqrt(gamma) a_e^dag`.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::engine::{evolve_master_with, par_map, MasterOptions, OpenModel, TimeGrid};
use crate::error::{Result, SimError};
use crate::fock::{DensityMatrix, Layout, ModeOperators, StateVector, UnitTag, C64, TAIL_GUARD};
use crate::photon::{heralding_model, HeraldParams, HeraldTruncations, EMISSION, HERALD, SHUTTER};

/// Shutter levels kept in the expansion.
pub const BLOCK_LEVELS: usize = 3;

/// `rho_ij = <i|rho|j>` over the shutter mode for `i, j < 3`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDecomposition {
    /// Layout of the remaining modes.
    pub layout: Layout,
    /// `blocks[i][j]`; `None` where the shutter truncation has no level `max(i, j)`.
    pub blocks: Vec<Vec<Option<DMatrix<C64>>>>,
    /// Population on shutter levels `>= 3`.
    pub residual: f64,
}

impl BlockDecomposition {
    pub fn block(&self, i: usize, j: usize) -> Option<&DMatrix<C64>> {
        self.blocks.get(i)?.get(j)?.as_ref()
    }

    /// `sum_ij rho_ij (x) |i><j|` in the original layout.
    pub fn reassemble(&self, full: &Layout, shutter: &str) -> Result<DMatrix<C64>> {
        let k = full.require_mode(shutter)?;
        let map = index_map(full, k);
        let d = full.dim();
        let mut out = DMatrix::zeros(d, d);
        for r in 0..d {
            for c in 0..d {
                let (i, mr) = map[r];
                let (j, mc) = map[c];
                if let Some(b) = self.block(i, j) {
                    out[(r, c)] = b[(mr, mc)];
                }
            }
        }
        Ok(out)
    }

    /// Largest `|rho_ij - rho_ji^dag|` entry.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..BLOCK_LEVELS {
            for j in 0..BLOCK_LEVELS {
                if let (Some(a), Some(b)) = (self.block(i, j), self.block(j, i)) {
                    worst = worst.max((a - b.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max));
                }
            }
        }
        worst
    }
}

// full index -> (shutter level, index in the layout without the shutter)
fn index_map(full: &Layout, k: usize) -> Vec<(usize, usize)> {
    let rest = full.without(k);
    (0..full.dim())
        .map(|i| {
            let mut occ = full.occupations(i);
            let level = occ.remove(k);
            (level, rest.as_ref().map_or(0, |l| l.index_of(&occ)))
        })
        .collect()
}

pub fn block_decompose(rho: &DensityMatrix, shutter: &str) -> Result<BlockDecomposition> {
    let full = rho.layout();
    let k = full.require_mode(shutter)?;
    let layout = full
        .without(k)
        .ok_or_else(|| SimError::Unsupported("block decomposition needs modes besides the shutter".into()))?;
    let levels = full.modes()[k].dim.min(BLOCK_LEVELS);
    let m = layout.dim();
    let mut blocks: Vec<Vec<Option<DMatrix<C64>>>> = (0..BLOCK_LEVELS)
        .map(|i| (0..BLOCK_LEVELS).map(|j| (i < levels && j < levels).then(|| DMatrix::zeros(m, m))).collect())
        .collect();
    let map = index_map(full, k);
    let e = rho.entries();
    let mut residual = 0.0;
    for (r, &(i, mr)) in map.iter().enumerate() {
        if i >= BLOCK_LEVELS {
            residual += e[(r, r)].re;
            continue;
        }
        for (c, &(j, mc)) in map.iter().enumerate() {
            if let Some(b) = blocks[i].get_mut(j).and_then(|b| b.as_mut()) {
                b[(mr, mc)] = e[(r, c)];
            }
        }
    }
    Ok(BlockDecomposition { layout, blocks, residual })
}

/// One parameter point of an elimination ladder. `zeta`, `Omega` and
/// `gamma` are always derived from the three rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadderPoint {
    pub lambda: f64,
    pub g: f64,
    pub kappa_sc: f64,
    pub truncations: HeraldTruncations,
}

impl LadderPoint {
    pub fn new(lambda: f64, g: f64, kappa_sc: f64) -> Self {
        Self { lambda, g, kappa_sc, truncations: HeraldTruncations { n_e: 14, n_h: 10, n_b: BLOCK_LEVELS } }
    }

    pub fn with_truncations(mut self, t: HeraldTruncations) -> Self {
        self.truncations = t;
        self
    }

    pub fn zeta(&self) -> f64 {
        self.g / self.kappa_sc
    }

    pub fn omega(&self) -> f64 {
        4.0 * self.g * self.g / self.kappa_sc
    }

    pub fn gamma(&self) -> f64 {
        self.lambda * self.lambda * self.kappa_sc / (self.g * self.g)
    }

    fn herald(&self) -> Result<HeraldParams> {
        HeraldParams::with_truncations(self.lambda, self.g, self.kappa_sc, self.truncations)
    }
}

/// `Lambda = 1`, `g in {5, 10, 20, 40}`, `kappa_sc = 10 g`: `zeta` fixed at 0.1 while `Omega / Lambda` doubles.
pub fn omega_ladder() -> Vec<LadderPoint> {
    [5.0, 10.0, 20.0, 40.0].iter().map(|&g| LadderPoint::new(1.0, g, 10.0 * g)).collect()
}

/// `Lambda = 1`, `Omega = 4`, `zeta in {0.2, 0.1, 0.05, 0.025}`, so `gamma = 1` throughout.
pub fn zeta_ladder() -> Vec<LadderPoint> {
    [0.2, 0.1, 0.05, 0.025]
        .iter()
        .map(|&z| {
            // Omega = 4 zeta g = 4  =>  g = 1/zeta
            let g = 1.0 / z;
            LadderPoint::new(1.0, g, g / z)
        })
        .collect()
}

/// `H = Lambda (a_e a_h + h.c.)`, `L = sqrt(Omega) a_h` on modes `e, h`.
pub fn intermediate_model(point: &LadderPoint) -> Result<OpenModel> {
    let t = point.truncations;
    let layout = Layout::new([(EMISSION, t.n_e), (HERALD, t.n_h)])?;
    let e = ModeOperators::on(&layout, EMISSION)?;
    let h = ModeOperators::on(&layout, HERALD)?;
    let pair = e.a.compose(&h.a)?;
    let hamiltonian = pair.plus(&pair.adjoint())?.scaled_real(point.lambda).with_unit(UnitTag::Rate);
    OpenModel::new(layout)
        .with_hamiltonian(hamiltonian)?
        .with_channel("omega", h.a.scaled_real(point.omega().sqrt()).with_unit(UnitTag::SqrtRate))
}

/// Relation errors averaged over a run; each is `mean ||lhs - rhs|| / mean (||lhs|| + ||rhs||)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelationReport {
    pub rel_err_rho20: f64,
    pub rel_err_rho10: f64,
    /// Time average of `Tr rho_11 / Tr rho_00`.
    pub weight_ratio_11_00: f64,
    pub max_residual: f64,
}

fn frob(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Block relations over the states of a full-model run (the `t = 0` state is skipped).
pub fn verify_block_relations(point: &LadderPoint, states: &[DensityMatrix]) -> Result<RelationReport> {
    let z = point.zeta();
    let mi = C64::new(0.0, -1.0);
    let (mut e20, mut n20, mut e10, mut n10, mut w, mut res) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0f64);
    let mut count = 0usize;
    let mut a_h: Option<DMatrix<C64>> = None;
    for rho in states.iter().skip(1) {
        let d = block_decompose(rho, SHUTTER)?;
        let a = match &a_h {
            Some(a) => a,
            None => a_h.insert(ModeOperators::on(&d.layout, HERALD)?.a.into_matrix()),
        };
        let (Some(r00), Some(r10), Some(r11)) = (d.block(0, 0), d.block(1, 0), d.block(1, 1)) else {
            return Err(SimError::InvalidDimension(rho.layout().modes()[rho.layout().require_mode(SHUTTER)?].dim));
        };
        let want10 = (a * r00 - r11 * a) * (mi * 2.0 * z);
        e10 += frob(&(r10 - &want10));
        n10 += frob(r10) + frob(&want10);
        if let Some(r20) = d.block(2, 0) {
            let want20 = a * r10 * (mi * std::f64::consts::SQRT_2 * z);
            e20 += frob(&(r20 - &want20));
            n20 += frob(r20) + frob(&want20);
        }
        let t00 = r00.trace().re;
        if t00 > 0.0 {
            w += r11.trace().re / t00;
        }
        res = res.max(d.residual);
        count += 1;
    }
    let ratio = |e: f64, n: f64| if n > 0.0 { e / n } else { 0.0 };
    Ok(RelationReport {
        rel_err_rho20: ratio(e20, n20),
        rel_err_rho10: ratio(e10, n10),
        weight_ratio_11_00: if count > 0 { w / count as f64 } else { 0.0 },
        max_residual: res,
    })
}

/// Ladder run settings in units of `1/gamma` of each point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadderOptions {
    pub horizon: f64,
    pub dt: f64,
}

impl Default for LadderOptions {
    fn default() -> Self {
        Self { horizon: 0.3, dt: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderRow {
    pub lambda: f64,
    pub g: f64,
    pub kappa_sc: f64,
    pub zeta: f64,
    pub omega: f64,
    pub gamma: f64,
    /// `max_t |<n_e>_full - <n_e>_model|`.
    pub err_intermediate: Option<f64>,
    pub err_final: Option<f64>,
    pub relations: Option<RelationReport>,
    pub error: Option<String>,
}

fn mean_emission(model: &OpenModel, grid: &TimeGrid) -> Result<Vec<f64>> {
    let rho0 = StateVector::vacuum(model.layout()).to_density();
    let sol = evolve_master_with(model, &rho0, grid, &MasterOptions::default())?;
    sol.expectations(&ModeOperators::on(model.layout(), EMISSION)?.n)
}

fn run_point(point: &LadderPoint, opts: &LadderOptions) -> Result<(f64, f64, RelationReport)> {
    let gamma = point.gamma();
    if !(gamma > 0.0) {
        return Err(SimError::InvalidArgument("ladder points need Lambda > 0".into()));
    }
    let grid = TimeGrid::span(opts.horizon / gamma, opts.dt / gamma)?;
    let p = point.herald()?;
    let full = heralding_model(&p, false)?;
    let rho0 = StateVector::vacuum(full.layout()).to_density();
    // the shutter is cut at the expansion order on purpose; only e and h are guarded
    let opts_full = MasterOptions { tail_guard: None, ..MasterOptions::default() };
    let sol = evolve_master_with(&full, &rho0, &grid, &opts_full)?;
    for (t, rho) in sol.times.iter().zip(&sol.states) {
        for r in rho.tail_report().into_iter().filter(|r| r.mode != SHUTTER) {
            if !(r.tail < TAIL_GUARD) {
                return Err(SimError::TruncationUnsafe { mode: r.mode, tail: r.tail, at: Some(*t) });
            }
        }
    }
    let n_full = sol.expectations(&ModeOperators::on(full.layout(), EMISSION)?.n)?;
    let relations = verify_block_relations(point, &sol.states)?;
    let n_mid = mean_emission(&intermediate_model(point)?, &grid)?;
    let n_fin = mean_emission(&heralding_model(&p, true)?, &grid)?;
    let max_diff = |other: &[f64]| n_full.iter().zip(other).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok((max_diff(&n_mid), max_diff(&n_fin), relations))
}

/// Runs every point (in parallel); failures are recorded per row. Rows are
/// sorted by decreasing `zeta`, ties keeping input order.
pub fn elimination_ladder(points: &[LadderPoint], opts: &LadderOptions) -> Vec<LadderRow> {
    let mut rows = par_map(points.len(), |i| {
        let pt = &points[i];
        let mut row = LadderRow {
            lambda: pt.lambda,
            g: pt.g,
            kappa_sc: pt.kappa_sc,
            zeta: pt.zeta(),
            omega: pt.omega(),
            gamma: pt.gamma(),
            err_intermediate: None,
            err_final: None,
            relations: None,
            error: None,
        };
        match run_point(pt, opts) {
            Ok((mid, fin, rel)) => {
                row.err_intermediate = Some(mid);
                row.err_final = Some(fin);
                row.relations = Some(rel);
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        row
    });
    rows.sort_by(|a, b| b.zeta.total_cmp(&a.zeta));
    rows
}

/// CSV with columns `Lambda,g,kappa_sc,zeta,Omega,gamma,err_intermediate,err_final,rel_err_rho20,rel_err_rho10`;
/// failed points have empty metric cells.
pub fn write_ladder_csv(rows: &[LadderRow], mut w: impl Write) -> Result<()> {
    let io = |e: std::io::Error| SimError::Io(e.to_string());
    writeln!(w, "Lambda,g,kappa_sc,zeta,Omega,gamma,err_intermediate,err_final,rel_err_rho20,rel_err_rho10").map_err(io)?;
    let cell = |v: Option<f64>| v.map(|x| format!("{x:.10e}")).unwrap_or_default();
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.lambda,
            r.g,
            r.kappa_sc,
            r.zeta,
            r.omega,
            r.gamma,
            cell(r.err_intermediate),
            cell(r.err_final),
            cell(r.relations.map(|x| x.rel_err_rho20)),
            cell(r.relations.map(|x| x.rel_err_rho10)),
        )
        .map_err(io)?;
    }
    Ok(())
}
