use std::fmt;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::channels::{css_channels, css_model, ChannelSet, CssParams};
use crate::engine::par_map;
use crate::error::{Result, SimError};
use crate::fock::{coherent_state, fidelity, Layout, StateVector, C64, SINGLE_MODE};
use crate::sparse::Csr;

/// Longest sequence [`sequence_search`] enumerates exhaustively.
pub const MAX_SEARCH_LENGTH: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum JumpSign {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl JumpSign {
    pub fn symbol(self) -> char {
        match self {
            JumpSign::Plus => '+',
            JumpSign::Minus => '-',
        }
    }
}

/// Detections in order, with an optional idle time after each one (units of `1/gamma`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpSequence {
    pub jumps: Vec<JumpSign>,
    /// Empty, or one entry per jump.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gaps: Vec<f64>,
}

impl JumpSequence {
    pub fn zero_gap(jumps: Vec<JumpSign>) -> Self {
        Self { jumps, gaps: Vec::new() }
    }

    pub fn all_plus(n: usize) -> Self {
        Self::zero_gap(vec![JumpSign::Plus; n])
    }

    /// Parses `"++-+"`, with an optional idle time after a jump as in `"+(0.25)-+"`.
    pub fn parse(s: &str) -> Result<Self> {
        let mut seq = Self::zero_gap(Vec::new());
        let mut gaps = Vec::new();
        let mut chars = s.chars().filter(|c| !c.is_whitespace()).peekable();
        while let Some(c) = chars.next() {
            match c {
                '+' => seq.jumps.push(JumpSign::Plus),
                '-' => seq.jumps.push(JumpSign::Minus),
                '(' if !seq.jumps.is_empty() => {
                    let text: String = chars.by_ref().take_while(|c| *c != ')').collect();
                    let g = text
                        .parse::<f64>()
                        .map_err(|e| SimError::InvalidArgument(format!("bad gap `{text}`: {e}")))?;
                    gaps.push((seq.jumps.len() - 1, g));
                }
                other => return Err(SimError::InvalidArgument(format!("unexpected jump symbol `{other}`"))),
            }
        }
        for (i, g) in gaps {
            seq = seq.with_gap_after(i, g)?;
        }
        seq.validate()?;
        Ok(seq)
    }

    /// Sets the idle time after jump `i`.
    pub fn with_gap_after(mut self, i: usize, gap: f64) -> Result<Self> {
        if i >= self.jumps.len() {
            return Err(SimError::InvalidArgument(format!("no jump {i} in a sequence of {}", self.jumps.len())));
        }
        if self.gaps.is_empty() {
            self.gaps = vec![0.0; self.jumps.len()];
        }
        self.gaps[i] = gap;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.jumps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jumps.is_empty()
    }

    fn validate(&self) -> Result<()> {
        if !self.gaps.is_empty() && self.gaps.len() != self.jumps.len() {
            return Err(SimError::InvalidArgument(format!(
                "{} gaps for {} jumps",
                self.gaps.len(),
                self.jumps.len()
            )));
        }
        if let Some(g) = self.gaps.iter().find(|g| !(**g >= 0.0 && g.is_finite())) {
            return Err(SimError::InvalidArgument(format!("gap {g} must be finite and non-negative")));
        }
        Ok(())
    }
}

impl fmt::Display for JumpSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, j) in self.jumps.iter().enumerate() {
            write!(f, "{}", j.symbol())?;
            if let Some(g) = self.gaps.get(i).filter(|g| **g > 0.0) {
                write!(f, "({g})")?;
            }
        }
        Ok(())
    }
}

/// Vacuum followed by the sequence: each jump applies `L_+` or `L_-` and
/// renormalizes; each gap evolves under the no-jump drift of both detectors.
pub fn apply_jump_sequence(seq: &JumpSequence, p: &CssParams) -> Result<StateVector> {
    seq.validate()?;
    let ch = css_channels(p)?;
    let layout = ch.l_plus.layout().clone();
    let needed = seq.len() + 4;
    if p.dim < needed {
        return Err(SimError::TruncationUnsafe { mode: SINGLE_MODE.into(), tail: f64::NAN, at: None }
            .context(format!("{} jumps need at least {needed} Fock levels, got {}", seq.len(), p.dim)));
    }
    let k = if seq.gaps.iter().any(|g| *g > 0.0) {
        Some(css_model(p, ChannelSet::Quadrature)?.effective_hamiltonian_at(0.0))
    } else {
        None
    };
    let mut psi = StateVector::vacuum(&layout);
    for (i, j) in seq.jumps.iter().enumerate() {
        let op = match j {
            JumpSign::Plus => &ch.l_plus,
            JumpSign::Minus => &ch.l_minus,
        };
        psi = psi
            .apply(op)?
            .normalize()
            .map_err(|_| SimError::NumericalDegeneracy(format!("jump {i} of `{seq}` annihilated the state")))?;
        let gap = seq.gaps.get(i).copied().unwrap_or(0.0);
        if gap > 0.0 {
            let k = k.as_ref().expect("built when any gap is positive");
            let u = (k * C64::new(0.0, -gap / p.gamma())).exp();
            psi = StateVector::new(layout.clone(), u * psi.amplitudes())?
                .normalize()
                .map_err(|_| SimError::NumericalDegeneracy(format!("gap after jump {i} of `{seq}` underflowed")))?;
        }
    }
    psi.check_truncation(crate::fock::TAIL_GUARD)?;
    Ok(psi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub sequence: JumpSequence,
    pub fidelity: f64,
    pub evaluated: usize,
}

/// Exhaustive search over zero-gap sequences of exactly `length` jumps for
/// the largest `|<target|psi>|`. Sequences are visited in lexicographic
/// order with `+` before `-`; a later sequence replaces the best only if it
/// is better by more than `1e-12`.
pub fn sequence_search(target: &StateVector, length: usize, p: &CssParams) -> Result<SearchResult> {
    let ch = css_channels(p)?;
    ch.l_plus.layout().ensure_same(target.layout(), "search target")?;
    let t = target.clone().normalize()?;
    let conj: DVector<C64> = t.amplitudes().map(|z| z.conj());
    search(length, p, move |v| conj.dot(v).norm() / v.norm())
}

/// Search for the sequence putting the most weight on the given Fock levels.
/// Returns the result and the normalized projection of its state onto those
/// levels, which serves as the target it was scored against.
pub fn fock_span_search(levels: &[usize], length: usize, p: &CssParams) -> Result<(SearchResult, StateVector)> {
    if levels.is_empty() || levels.iter().any(|&l| l >= p.dim) {
        return Err(SimError::InvalidArgument(format!("levels {levels:?} outside a truncation of {}", p.dim)));
    }
    let lv = levels.to_vec();
    let res = search(length, p, move |v| lv.iter().map(|&l| v[l].norm_sqr()).sum::<f64>().sqrt() / v.norm())?;
    let psi = apply_jump_sequence(&res.sequence, p)?;
    let mut proj = DVector::zeros(p.dim);
    for &l in levels {
        proj[l] = psi.amplitudes()[l];
    }
    let target = StateVector::new(psi.layout().clone(), proj)?.normalize()?;
    Ok((res, target))
}

fn search(length: usize, p: &CssParams, score: impl Fn(&DVector<C64>) -> f64) -> Result<SearchResult> {
    if length == 0 || length > MAX_SEARCH_LENGTH {
        return Err(SimError::InvalidArgument(format!("search length {length} outside 1..={MAX_SEARCH_LENGTH}")));
    }
    if p.dim < length + 4 {
        return Err(SimError::TruncationUnsafe { mode: SINGLE_MODE.into(), tail: f64::NAN, at: None }
            .context(format!("length-{length} search needs at least {} Fock levels, got {}", length + 4, p.dim)));
    }
    let ch = css_channels(p)?;
    let ops = [Csr::from_dense(ch.l_plus.matrix()), Csr::from_dense(ch.l_minus.matrix())];
    // stack[d] holds the unnormalized state after d jumps of the current branch
    let mut stack = vec![DVector::<C64>::zeros(p.dim); length + 1];
    stack[0][0] = C64::new(1.0, 0.0);
    let mut best = (f64::NEG_INFINITY, 0u32);
    let total = 1u32 << length;
    for code in 0..total {
        // bit (length-1-d) of code picks the sign of jump d; reuse the shared prefix
        let shared = if code == 0 { 0 } else { length - 1 - code.trailing_zeros() as usize };
        for d in shared..length {
            let bit = (code >> (length - 1 - d)) & 1;
            let (lo, hi) = stack.split_at_mut(d + 1);
            ops[bit as usize].mul_vec(&lo[d], &mut hi[0]);
        }
        let s = score(&stack[length]);
        if s > best.0 + 1e-12 {
            best = (s, code);
        }
    }
    let jumps = (0..length)
        .map(|d| if (best.1 >> (length - 1 - d)) & 1 == 0 { JumpSign::Plus } else { JumpSign::Minus })
        .collect();
    Ok(SearchResult { sequence: JumpSequence::zero_gap(jumps), fidelity: best.0, evaluated: total as usize })
}

/// Normalized `sum_k i^{phases[k]} |i^k alpha>`, `k = 0..3`.
pub fn four_component_cat(alpha: C64, phases: [u8; 4], dim: usize) -> Result<StateVector> {
    let layout = Layout::single(SINGLE_MODE, dim)?;
    let mut amps = DVector::<C64>::zeros(dim);
    let mut rot = C64::new(1.0, 0.0);
    for &ph in &phases {
        let c = C64::new(0.0, 1.0).powu(ph as u32 % 4);
        amps += coherent_state(alpha * rot, dim)?.amplitudes() * c;
        rot *= C64::new(0.0, 1.0);
    }
    StateVector::new(layout, amps)?
        .normalize()
        .map_err(|e| e.context(format!("four-component cat with phases {phases:?} vanishes")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatSearch {
    pub alpha_abs: f64,
    pub alpha_arg: f64,
    /// Phase exponents of the best target, `c_k = i^{phases[k]}`.
    pub phases: [u8; 4],
    pub result: SearchResult,
    /// Best fidelity for the equal-weight target (all phases 0).
    pub equal_weight_fidelity: f64,
}

/// Sequence search against every four-component cat with `c_0 = 1` and
/// `c_{1,2,3}` powers of `i`; returns the best assignment.
pub fn four_cat_search(alpha: C64, length: usize, p: &CssParams) -> Result<CatSearch> {
    let assignments: Vec<[u8; 4]> = (0..64u8).map(|m| [0, m & 3, (m >> 2) & 3, (m >> 4) & 3]).collect();
    let results = par_map(assignments.len(), |i| -> Result<SearchResult> {
        let target = four_component_cat(alpha, assignments[i], p.dim)?;
        sequence_search(&target, length, p)
    });
    let mut best: Option<(usize, SearchResult)> = None;
    let mut equal = f64::NAN;
    for (i, r) in results.into_iter().enumerate() {
        let r = r?;
        if i == 0 {
            equal = r.fidelity;
        }
        if best.as_ref().is_none_or(|(_, b)| r.fidelity > b.fidelity + 1e-12) {
            best = Some((i, r));
        }
    }
    let (i, result) = best.expect("64 assignments");
    Ok(CatSearch { alpha_abs: alpha.norm(), alpha_arg: alpha.arg(), phases: assignments[i], result, equal_weight_fidelity: equal })
}

/// Fidelity of the state a sequence prepares with `target`.
pub fn sequence_fidelity(seq: &JumpSequence, target: &StateVector, p: &CssParams) -> Result<f64> {
    fidelity(&apply_jump_sequence(seq, p)?, target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{cat_state, quadrature_jump_state, Parity};

    #[test]
    fn all_plus_is_quadrature_state() {
        let p = CssParams::unit_gamma(20).unwrap();
        for n in 1..6 {
            let a = apply_jump_sequence(&JumpSequence::all_plus(n), &p).unwrap();
            let b = quadrature_jump_state(n as u32, 20).unwrap();
            assert!((a.amplitudes() - b.amplitudes()).norm() < 1e-14);
        }
    }

    #[test]
    fn parse_and_display_round_trip() {
        let s = JumpSequence::parse("+-+ +").unwrap();
        assert_eq!(s.to_string(), "+-++");
        assert!(JumpSequence::parse("+x").is_err());
        let g = s.with_gap_after(1, 0.25).unwrap();
        assert_eq!(g.to_string(), "+-(0.25)++");
        assert!(JumpSequence::all_plus(2).with_gap_after(0, -1.0).unwrap().validate().is_err());
    }

    #[test]
    fn single_photon_target_prefers_plus() {
        let p = CssParams::unit_gamma(8).unwrap();
        let one = StateVector::fock(&Layout::single(SINGLE_MODE, 8).unwrap(), &[1]).unwrap();
        let r = sequence_search(&one, 1, &p).unwrap();
        assert_eq!(r.sequence, JumpSequence::parse("+").unwrap());
        assert!((r.fidelity - 1.0).abs() < 1e-14);
        assert_eq!(r.evaluated, 2);
    }

    #[test]
    fn search_matches_direct_evaluation() {
        let p = CssParams::unit_gamma(16).unwrap();
        let target = cat_state(C64::new(0.9, 0.4), Parity::Even, 16).unwrap();
        let r = sequence_search(&target, 6, &p).unwrap();
        let direct = sequence_fidelity(&r.sequence, &target, &p).unwrap();
        assert!((direct - r.fidelity).abs() < 1e-12);
        // brute force over all 64 sequences
        let mut best: f64 = 0.0;
        for code in 0..64u32 {
            let s: String = (0..6).map(|d| if (code >> (5 - d)) & 1 == 0 { '+' } else { '-' }).collect();
            best = best.max(sequence_fidelity(&JumpSequence::parse(&s).unwrap(), &target, &p).unwrap());
        }
        assert!((best - r.fidelity).abs() < 1e-12);
    }

    #[test]
    fn four_cat_has_period_four_support() {
        let s = four_component_cat(C64::from_polar(1.5, 0.3), [0, 0, 0, 0], 30).unwrap();
        for (n, a) in s.amplitudes().iter().enumerate() {
            if n % 4 != 0 {
                assert!(a.norm() < 1e-12);
            }
        }
    }
}
