//! Macroscopic Hausdorff dimension toolkit: shells, covering functionals over
//! aligned dyadic boxes, the slope read-out, skeletons, thick sets and the
//! density measure.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::parallel::par_map;
use crate::stats::linear_fit;

/// Index `n` of the shell `𝕊_n` containing `x`, where `𝕍_n = [−e^n, e^n)^d`,
/// `𝕊_0 = 𝕍_0` and `𝕊_n = 𝕍_n \ 𝕍_{n−1}`.
pub fn shell_index(x: &[f64]) -> usize {
    let mut n = 0usize;
    loop {
        let e = (n as f64).exp();
        if x.iter().all(|&c| c >= -e && c < e) {
            return n;
        }
        n += 1;
    }
}

/// The annular region `𝕊_n` in dimension `d`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Shell {
    pub n: usize,
    pub d: usize,
}

pub fn shell(n: usize, d: usize) -> Shell {
    Shell { n, d }
}

impl Shell {
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.d && shell_index(x) == self.n
    }

    fn outer(&self) -> f64 {
        (self.n as f64).exp()
    }

    fn inner(&self) -> Option<f64> {
        (self.n > 0).then(|| (self.n as f64 - 1.0).exp())
    }

    /// Integer range `[lo, hi]` of coordinates inside `𝕍_n`.
    fn int_range(e: f64) -> (i64, i64) {
        ((-e).ceil() as i64, e.ceil() as i64 - 1)
    }

    pub fn contains_int(&self, k: &[i64]) -> bool {
        let (lo, hi) = Self::int_range(self.outer());
        if !k.iter().all(|&c| c >= lo && c <= hi) {
            return false;
        }
        match self.inner() {
            None => true,
            Some(e) => {
                let (ilo, ihi) = Self::int_range(e);
                !k.iter().all(|&c| c >= ilo && c <= ihi)
            }
        }
    }

    /// Integer points of the cell `[a, a+s)^d` meet the shell.
    fn cell_meets(&self, a: &[i64], s: i64) -> bool {
        let (lo, hi) = Self::int_range(self.outer());
        if !a.iter().all(|&c| c + s - 1 >= lo && c <= hi) {
            return false;
        }
        match self.inner() {
            None => true,
            Some(e) => {
                let (ilo, ihi) = Self::int_range(e);
                // Not entirely inside the inner box.
                !a.iter().all(|&c| c >= ilo && c + s - 1 <= ihi)
            }
        }
    }

    /// The real cube `[a, a+s)^d` lies inside `𝕊_n`.
    fn cell_inside(&self, a: &[i64], s: i64) -> bool {
        let e = self.outer();
        let sf = s as f64;
        if !a.iter().all(|&c| c as f64 >= -e && c as f64 + sf <= e) {
            return false;
        }
        match self.inner() {
            None => true,
            Some(ei) => a.iter().any(|&c| c as f64 + sf <= -ei || c as f64 >= ei),
        }
    }
}

/// A set of integer lattice points with exact counts on aligned dyadic cells.
pub trait LatticeSet: Sync {
    fn dim(&self) -> usize;

    /// Number of points in `[lo, lo+side)^d`; `side` is a power of two and `lo`
    /// a multiple of it.
    fn count_in(&self, lo: &[i64], side: i64) -> u64;

    /// Translation-invariant description of the points in the cell, when cheap.
    /// Equal patterns must imply equal point sets up to translation.
    fn pattern(&self, _lo: &[i64], _side: i64) -> Option<Vec<i64>> {
        None
    }

    /// Number of points in the inclusive box `[lo, hi]`.
    fn count_box(&self, lo: &[i64], hi: &[i64]) -> u64 {
        if lo.iter().zip(hi).any(|(a, b)| a > b) {
            return 0;
        }
        let extent = lo.iter().zip(hi).map(|(a, b)| b - a + 1).max().unwrap_or(1);
        let mut s = 1i64;
        while s < extent {
            s *= 2;
        }
        s *= 2;
        let start: Vec<i64> = lo.iter().map(|&c| c.div_euclid(s) * s).collect();
        let mut total = 0;
        let d = self.dim();
        for corner in 0..(1usize << d) {
            let a: Vec<i64> = (0..d)
                .map(|i| start[i] + if corner >> i & 1 == 1 { s } else { 0 })
                .collect();
            total += count_box_rec(self, &a, s, lo, hi);
        }
        total
    }
}

fn count_box_rec<S: LatticeSet + ?Sized>(set: &S, a: &[i64], s: i64, lo: &[i64], hi: &[i64]) -> u64 {
    let d = a.len();
    if (0..d).any(|i| a[i] > hi[i] || a[i] + s - 1 < lo[i]) {
        return 0;
    }
    if (0..d).all(|i| a[i] >= lo[i] && a[i] + s - 1 <= hi[i]) {
        return set.count_in(a, s);
    }
    if set.count_in(a, s) == 0 {
        return 0;
    }
    let h = s / 2;
    (0..(1usize << d))
        .map(|c| {
            let b: Vec<i64> = (0..d).map(|i| a[i] + if c >> i & 1 == 1 { h } else { 0 }).collect();
            count_box_rec(set, &b, h, lo, hi)
        })
        .sum()
}

const MORTON_BITS: u32 = 21;
const MORTON_OFFSET: i64 = 1 << 20;

fn morton(k: &[i64]) -> u128 {
    let d = k.len() as u32;
    let mut code = 0u128;
    for (i, &c) in k.iter().enumerate() {
        let u = (c + MORTON_OFFSET) as u128;
        for b in 0..MORTON_BITS {
            code |= ((u >> b) & 1) << (b * d + i as u32);
        }
    }
    code
}

/// Finite cloud of real points in `R^d`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct PointCloud {
    pub d: usize,
    pub points: Vec<Vec<f64>>,
}

impl PointCloud {
    pub fn new(d: usize, points: Vec<Vec<f64>>) -> Self {
        Self { d, points }
    }

    /// Snap to unit resolution (floor) and deduplicate.
    pub fn snap(&self) -> IntCloud {
        IntCloud::new(
            self.d,
            self.points
                .iter()
                .map(|p| p.iter().map(|c| c.floor() as i64).collect())
                .collect(),
        )
    }
}

/// Deduplicated integer points, Morton-sorted for range counting.
#[derive(Clone, Debug)]
pub struct IntCloud {
    d: usize,
    codes: Vec<u128>,
    points: Vec<Vec<i64>>,
}

impl IntCloud {
    /// Coordinates must satisfy `|k| < 2^20`.
    pub fn new(d: usize, mut points: Vec<Vec<i64>>) -> Self {
        points.retain(|p| p.iter().all(|&c| c.abs() < MORTON_OFFSET));
        let mut keyed: Vec<(u128, Vec<i64>)> = points.into_iter().map(|p| (morton(&p), p)).collect();
        keyed.sort_by_key(|(c, _)| *c);
        keyed.dedup_by_key(|(c, _)| *c);
        let (codes, points) = keyed.into_iter().unzip();
        Self { d, codes, points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<i64>] {
        &self.points
    }

    pub fn contains(&self, k: &[i64]) -> bool {
        self.codes.binary_search(&morton(k)).is_ok()
    }

    /// Union of two clouds.
    pub fn union(&self, other: &IntCloud) -> IntCloud {
        let mut pts = self.points.clone();
        pts.extend(other.points.iter().cloned());
        IntCloud::new(self.d, pts)
    }
}

impl LatticeSet for IntCloud {
    fn dim(&self) -> usize {
        self.d
    }

    fn count_in(&self, lo: &[i64], side: i64) -> u64 {
        let j = side.trailing_zeros();
        let start = morton(lo);
        let end = start + (1u128 << (j * self.d as u32));
        let a = self.codes.partition_point(|&c| c < start);
        let b = self.codes.partition_point(|&c| c < end);
        (b - a) as u64
    }

    fn pattern(&self, lo: &[i64], side: i64) -> Option<Vec<i64>> {
        let j = side.trailing_zeros();
        let start = morton(lo);
        let end = start + (1u128 << (j * self.d as u32));
        let a = self.codes.partition_point(|&c| c < start);
        let b = self.codes.partition_point(|&c| c < end);
        if b - a > 64 {
            return None;
        }
        Some(
            self.points[a..b]
                .iter()
                .flat_map(|p| p.iter().zip(lo).map(|(x, l)| x - l))
                .collect(),
        )
    }
}

/// Every integer point of `Z^d`.
#[derive(Clone, Copy, Debug)]
pub struct FullLattice {
    pub d: usize,
}

impl LatticeSet for FullLattice {
    fn dim(&self) -> usize {
        self.d
    }

    fn count_in(&self, _lo: &[i64], side: i64) -> u64 {
        (side as u64).pow(self.d as u32)
    }
}

/// Integer points on the coordinate axis `axis`.
#[derive(Clone, Copy, Debug)]
pub struct AxisLine {
    pub d: usize,
    pub axis: usize,
}

impl LatticeSet for AxisLine {
    fn dim(&self) -> usize {
        self.d
    }

    fn count_in(&self, lo: &[i64], side: i64) -> u64 {
        let hits_origin = (0..self.d)
            .filter(|&i| i != self.axis)
            .all(|i| lo[i] <= 0 && 0 < lo[i] + side);
        if hits_origin {
            side as u64
        } else {
            0
        }
    }
}

/// Disjoint union of inclusive integer boxes.
#[derive(Clone, Debug)]
pub struct BoxUnion {
    pub d: usize,
    pub boxes: Vec<(Vec<i64>, Vec<i64>)>,
}

impl LatticeSet for BoxUnion {
    fn dim(&self) -> usize {
        self.d
    }

    fn count_in(&self, lo: &[i64], side: i64) -> u64 {
        self.boxes
            .iter()
            .map(|(a, b)| {
                (0..self.d)
                    .map(|i| {
                        let l = a[i].max(lo[i]);
                        let h = b[i].min(lo[i] + side - 1);
                        (h - l + 1).max(0) as u64
                    })
                    .product::<u64>()
            })
            .sum()
    }
}

/// Snapped anchors `⌊e^n + j e^{nθ}⌋`, `0 ≤ j < e^{n(1−θ)}`, deduplicated.
pub fn skeleton_axis(theta: f64, n: usize) -> Vec<i64> {
    let nf = n as f64;
    let step = (nf * theta).exp();
    let count = (nf * (1.0 - theta)).exp();
    let mut out = Vec::new();
    let mut j = 0f64;
    while j < count {
        out.push(((nf).exp() + j * step).floor() as i64);
        j += 1.0;
    }
    out.dedup();
    out
}

/// θ-skeleton `∪_n 𝓘_n(θ)` in the first orthant; `𝓘_n(θ) = I_n(θ)^d`.
#[derive(Clone, Debug)]
pub struct Skeleton {
    pub d: usize,
    pub theta: f64,
    pub levels: Vec<(usize, Vec<i64>)>,
}

/// Build the θ-skeleton over the level range `n_range`.
pub fn skeleton(theta: f64, d: usize, n_range: std::ops::RangeInclusive<usize>) -> Result<Skeleton> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(param("theta", "must lie in (0, 1)"));
    }
    Ok(Skeleton {
        d,
        theta,
        levels: n_range.map(|n| (n, skeleton_axis(theta, n))).collect(),
    })
}

impl Skeleton {
    pub fn to_cloud(&self) -> IntCloud {
        let mut pts = Vec::new();
        for (_, axis) in &self.levels {
            let total = axis.len().pow(self.d as u32);
            for f in 0..total {
                let mut rest = f;
                let p: Vec<i64> = (0..self.d)
                    .map(|_| {
                        let v = axis[rest % axis.len()];
                        rest /= axis.len();
                        v
                    })
                    .collect();
                pts.push(p);
            }
        }
        IntCloud::new(self.d, pts)
    }

    /// Points of level `n`.
    pub fn level_len(&self, n: usize) -> usize {
        self.levels
            .iter()
            .find(|(m, _)| *m == n)
            .map(|(_, a)| a.len().pow(self.d as u32))
            .unwrap_or(0)
    }
}

impl LatticeSet for Skeleton {
    fn dim(&self) -> usize {
        self.d
    }

    fn count_in(&self, lo: &[i64], side: i64) -> u64 {
        self.levels
            .iter()
            .map(|(_, axis)| {
                (0..self.d)
                    .map(|i| {
                        let a = axis.partition_point(|&x| x < lo[i]);
                        let b = axis.partition_point(|&x| x < lo[i] + side);
                        (b - a) as u64
                    })
                    .product::<u64>()
            })
            .sum()
    }

    fn pattern(&self, lo: &[i64], side: i64) -> Option<Vec<i64>> {
        let mut out = Vec::new();
        for (n, axis) in &self.levels {
            let ranges: Vec<(usize, usize)> = (0..self.d)
                .map(|i| {
                    (
                        axis.partition_point(|&x| x < lo[i]),
                        axis.partition_point(|&x| x < lo[i] + side),
                    )
                })
                .collect();
            if ranges.iter().any(|(a, b)| a == b) {
                continue;
            }
            out.push(-(*n as i64) - 2);
            for (i, (a, b)) in ranges.into_iter().enumerate() {
                out.extend(axis[a..b].iter().map(|x| x - lo[i]));
                out.push(-1);
            }
        }
        Some(out)
    }
}

/// Shell-localized block fixture: lattice points of `E_n ∩ 𝕊_{n+1}` with
/// `E_n = (0, e^{n/q}]^k × (e^{n/q}, e^{n+1}]^{d−k}`, for `n` in range.
pub fn block_lemma_fixture(q: f64, k: usize, d: usize, n_range: std::ops::RangeInclusive<usize>) -> Result<BoxUnion> {
    if !(q >= 1.0) {
        return Err(param("q", "must be at least 1"));
    }
    if k == 0 || k >= d {
        return Err(param("k", "must lie in 1..d"));
    }
    let mut boxes = Vec::new();
    for n in n_range {
        let nf = n as f64;
        let w = (nf / q).exp().floor() as i64;
        let inner = nf.exp().ceil() as i64;
        let lo_tail = ((nf / q).exp().floor() as i64 + 1).max(1);
        let top = (nf + 1.0).exp().ceil() as i64 - 1;
        if w < 1 || top < inner {
            continue;
        }
        // Disjoint split of "some tail coordinate ≥ e^n" by the first such coordinate.
        for j in k..d {
            let mut a = vec![1i64; d];
            let mut b = vec![w; d];
            for i in k..d {
                if i < j {
                    a[i] = lo_tail;
                    b[i] = inner - 1;
                } else if i == j {
                    a[i] = inner;
                    b[i] = top;
                } else {
                    a[i] = lo_tail;
                    b[i] = top;
                }
            }
            if (0..d).all(|i| a[i] <= b[i]) {
                boxes.push((a, b));
            }
        }
    }
    Ok(BoxUnion { d, boxes })
}

/// Exact minimum over covers of `E ∩ 𝕊_n` by aligned dyadic cubes inside the
/// shell (unit cubes always allowed), for every `ρ` in `rhos` at once.
pub fn dyadic_cover<S: LatticeSet + ?Sized>(set: &S, n: usize, rhos: &[f64]) -> Vec<f64> {
    dyadic_cover_shifted(set, n, rhos, &vec![0; set.dim()])
}

/// As [`dyadic_cover`] with the dyadic grid translated by `offset`.
pub fn dyadic_cover_shifted<S: LatticeSet + ?Sized>(set: &S, n: usize, rhos: &[f64], offset: &[i64]) -> Vec<f64> {
    let d = set.dim();
    let sh = Shell { n, d };
    let e = sh.outer();
    let mut root = 1i64;
    while (2 * root) as f64 <= e {
        root *= 2;
    }
    let (lo, hi) = Shell::int_range(e);
    let start: Vec<i64> = offset.iter().map(|o| (lo - o).div_euclid(root) * root + o).collect();
    let per_axis: Vec<usize> = start.iter().map(|s| ((hi - s) / root + 1) as usize).collect();
    let mut ctx = CoverCtx {
        set: Translated { inner: set, offset },
        sh,
        rhos,
        scale: e,
        memo: HashMap::new(),
        patterns: HashMap::new(),
    };
    let mut total = vec![0.0; rhos.len()];
    let cells: usize = per_axis.iter().product();
    for f in 0..cells {
        let mut rest = f;
        let a: Vec<i64> = (0..d)
            .map(|i| {
                let v = start[i] - offset[i] + (rest % per_axis[i]) as i64 * root;
                rest /= per_axis[i];
                v
            })
            .collect();
        let c = ctx.cost(&a, root);
        for (t, v) in total.iter_mut().zip(c) {
            *t += v;
        }
    }
    total
}

/// Elementwise minimum of [`dyadic_cover_shifted`] over offsets `{0, …, shifts−1}^d`.
pub fn dyadic_cover_min<S: LatticeSet + ?Sized>(set: &S, n: usize, rhos: &[f64], shifts: usize) -> Vec<f64> {
    let d = set.dim();
    let shifts = shifts.max(1);
    let mut best = vec![f64::INFINITY; rhos.len()];
    for f in 0..shifts.pow(d as u32) {
        let mut rest = f;
        let off: Vec<i64> = (0..d)
            .map(|_| {
                let v = (rest % shifts) as i64;
                rest /= shifts;
                v
            })
            .collect();
        for (b, v) in best.iter_mut().zip(dyadic_cover_shifted(set, n, rhos, &off)) {
            *b = b.min(v);
        }
    }
    best
}

/// Set seen in a frame translated by `-offset`.
struct Translated<'a, S: ?Sized> {
    inner: &'a S,
    offset: &'a [i64],
}

impl<S: LatticeSet + ?Sized> Translated<'_, S> {
    fn to_inner(&self, lo: &[i64]) -> Vec<i64> {
        lo.iter().zip(self.offset).map(|(a, o)| a + o).collect()
    }

    fn count_in(&self, lo: &[i64], side: i64) -> u64 {
        let a = self.to_inner(lo);
        if a.iter().all(|c| c % side == 0) {
            self.inner.count_in(&a, side)
        } else {
            let b: Vec<i64> = a.iter().map(|c| c + side - 1).collect();
            self.inner.count_box(&a, &b)
        }
    }

    fn pattern(&self, lo: &[i64], side: i64) -> Option<Vec<i64>> {
        let a = self.to_inner(lo);
        if a.iter().all(|c| c % side == 0) {
            self.inner.pattern(&a, side)
        } else {
            None
        }
    }
}

struct CoverCtx<'a, S: LatticeSet + ?Sized> {
    set: Translated<'a, S>,
    sh: Shell,
    rhos: &'a [f64],
    scale: f64,
    memo: HashMap<i64, Vec<f64>>,
    patterns: HashMap<(i64, Vec<i64>), Vec<f64>>,
}

impl<S: LatticeSet + ?Sized> CoverCtx<'_, S> {
    fn single(&self, s: i64) -> Vec<f64> {
        let r = s as f64 / self.scale;
        self.rhos.iter().map(|&rho| r.powf(rho)).collect()
    }

    fn full(&mut self, s: i64) -> Vec<f64> {
        if let Some(v) = self.memo.get(&s) {
            return v.clone();
        }
        let own = self.single(s);
        let v = if s == 1 {
            own
        } else {
            let child = self.full(s / 2);
            let m = (1u64 << self.sh.d) as f64;
            own.iter().zip(&child).map(|(a, b)| a.min(m * b)).collect()
        };
        self.memo.insert(s, v.clone());
        v
    }

    fn cost(&mut self, a: &[i64], s: i64) -> Vec<f64> {
        let d = self.sh.d;
        let orig = self.set.to_inner(a);
        if !self.sh.cell_meets(&orig, s) {
            return vec![0.0; self.rhos.len()];
        }
        let count = self.set.count_in(a, s);
        if count == 0 {
            return vec![0.0; self.rhos.len()];
        }
        let inside = self.sh.cell_inside(&orig, s);
        if s == 1 || (count == 1 && inside) {
            return self.single(1);
        }
        if inside && count == (s as u64).pow(d as u32) {
            return self.full(s);
        }
        // Below an inside cell every sub-cell is inside too, so the optimum
        // depends only on the point pattern.
        let key = if inside { self.set.pattern(a, s).map(|p| (s, p)) } else { None };
        if let Some(k) = &key {
            if let Some(v) = self.patterns.get(k) {
                return v.clone();
            }
        }
        let h = s / 2;
        let mut acc = vec![0.0; self.rhos.len()];
        for c in 0..(1usize << d) {
            let b: Vec<i64> = (0..d).map(|i| a[i] + if c >> i & 1 == 1 { h } else { 0 }).collect();
            for (x, y) in acc.iter_mut().zip(self.cost(&b, h)) {
                *x += y;
            }
        }
        if inside {
            for (x, y) in acc.iter_mut().zip(self.single(s)) {
                *x = x.min(y);
            }
        }
        if let Some(k) = key {
            self.patterns.insert(k, acc.clone());
        }
        acc
    }
}

/// Grid translates per axis used by [`cover_functional`].
pub const COVER_SHIFTS: usize = 2;

/// `ν̂_ρ^n(E)` for a single `ρ`: best dyadic cover over the `2^d` unit
/// translates of the grid.
pub fn cover_functional<S: LatticeSet + ?Sized>(set: &S, rho: f64, n: usize) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(param("rho", "must be positive"));
    }
    Ok(dyadic_cover_min(set, n, &[rho], COVER_SHIFTS)[0])
}

/// Cost of the trivial cover by unit cubes, `#(E ∩ 𝕊_n) e^{−nρ}`.
pub fn unit_cover<S: LatticeSet + ?Sized>(set: &S, rho: f64, n: usize) -> f64 {
    let d = set.dim();
    let sh = Shell { n, d };
    let (lo, hi) = Shell::int_range(sh.outer());
    let mut count = set.count_box(&vec![lo; d], &vec![hi; d]);
    if let Some(e) = sh.inner() {
        let (ilo, ihi) = Shell::int_range(e);
        count -= set.count_box(&vec![ilo; d], &vec![ihi; d]);
    }
    count as f64 * (-(n as f64) * rho).exp()
}

/// Exact `ν_ρ^n` for a handful of integer points: minimum over partitions, each
/// group covered by one cube of side `max(1, extent+1)` placed inside the shell.
pub fn brute_force_nu(points: &[Vec<i64>], n: usize, rho: f64) -> Result<f64> {
    let m = points.len();
    if m > 16 {
        return Err(param("points", "brute force limited to 16 points"));
    }
    if m == 0 {
        return Ok(0.0);
    }
    let d = points[0].len();
    let sh = Shell { n, d };
    if points.iter().any(|p| !sh.contains_int(p)) {
        return Err(param("points", "all points must lie in the shell"));
    }
    let full = (1usize << m) - 1;
    let mut group = vec![f64::INFINITY; full + 1];
    for (mask, g) in group.iter_mut().enumerate().skip(1) {
        let members: Vec<&Vec<i64>> = (0..m).filter(|&i| mask >> i & 1 == 1).map(|i| &points[i]).collect();
        let lo: Vec<i64> = (0..d).map(|a| members.iter().map(|p| p[a]).min().unwrap()).collect();
        let hi: Vec<i64> = (0..d).map(|a| members.iter().map(|p| p[a]).max().unwrap()).collect();
        let side = (0..d).map(|a| hi[a] - lo[a] + 1).max().unwrap() as f64;
        if members.len() == 1 || placeable(&sh, &lo, &hi, side) {
            *g = (side / sh.outer()).powf(rho);
        }
    }
    let mut best = vec![f64::INFINITY; full + 1];
    best[0] = 0.0;
    for mask in 1..=full {
        let low = mask & mask.wrapping_neg();
        let rest = mask ^ low;
        let mut sub = rest;
        loop {
            let g = sub | low;
            let c = group[g] + best[mask ^ g];
            if c < best[mask] {
                best[mask] = c;
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & rest;
        }
    }
    Ok(best[full])
}

/// A real cube of side `side` covering the unit cells `[lo, hi+1)` fits in the shell.
fn placeable(sh: &Shell, lo: &[i64], hi: &[i64], side: f64) -> bool {
    let e = sh.outer();
    let d = lo.len();
    let mut ranges = Vec::with_capacity(d);
    for a in 0..d {
        let pmin = (hi[a] as f64 + 1.0 - side).max(-e);
        let pmax = (lo[a] as f64).min(e - side);
        if pmin > pmax + 1e-12 {
            return false;
        }
        ranges.push((pmin, pmax));
    }
    match sh.inner() {
        None => true,
        Some(ei) => ranges
            .iter()
            .any(|&(pmin, pmax)| pmin + side <= -ei + 1e-12 || pmax >= ei - 1e-12),
    }
}

/// Per-shell covering values and the dimension read-out.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoverReport {
    pub rho_grid: Vec<f64>,
    pub shells: Vec<usize>,
    /// `nu[i][j]`: shell `shells[i]`, exponent `rho_grid[j]`.
    pub nu: Vec<Vec<f64>>,
    /// Least-squares slope of `log ν̂` against `n` over nonempty shells.
    pub slopes: Vec<Option<f64>>,
    pub usable_shells: usize,
    pub estimate: Option<f64>,
    pub method: String,
}

/// Default exponent grid `0.05, 0.10, …` up to `d + 0.5`.
pub fn default_rho_grid(d: usize) -> Vec<f64> {
    let steps = ((d as f64 + 0.5) / 0.05).round() as usize;
    (1..=steps).map(|i| i as f64 * 0.05).collect()
}

/// Slope threshold separating the flat branch from the decaying branch.
pub const SLOPE_DELTA: f64 = 0.05;

/// Dimension read-out from the per-ρ slopes.
///
/// Below the dimension the cheapest covers use large boxes and the slope is
/// near zero; above it unit boxes win and the slope follows `D − ρ`. The
/// decaying branch starting at the first slope below `−δ` is fitted and
/// extrapolated to its zero.
pub fn read_dimension(rhos: &[f64], slopes: &[Option<f64>]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rhos
        .iter()
        .zip(slopes)
        .filter_map(|(&r, s)| s.map(|s| (r, s)))
        .collect();
    let first = pts.iter().position(|&(_, s)| s < -SLOPE_DELTA)?;
    let window = &pts[first..(first + 4).min(pts.len())];
    if window.len() >= 2 {
        let xs: Vec<f64> = window.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = window.iter().map(|p| p.1).collect();
        if let Some(f) = linear_fit(&xs, &ys) {
            if f.slope < 0.0 {
                return Some((-f.intercept / f.slope).max(0.0));
            }
        }
    }
    // Linear interpolation through the crossing of −δ, shifted back by δ.
    let (r1, s1) = pts[first];
    match first.checked_sub(1).map(|i| pts[i]) {
        Some((r0, s0)) if s0 != s1 => Some(r0 + (s0 + SLOPE_DELTA) * (r1 - r0) / (s0 - s1)),
        _ => Some(r1),
    }
}

/// Covering values on shells `n_range` and the slope read-out.
pub fn dim_estimate<S: LatticeSet + ?Sized>(
    set: &S,
    rho_grid: &[f64],
    n_range: std::ops::RangeInclusive<usize>,
) -> CoverReport {
    let shells: Vec<usize> = n_range.collect();
    let nu: Vec<Vec<f64>> = par_map(shells.clone(), |n| dyadic_cover(set, n, rho_grid));
    report_from_nu(rho_grid, shells, nu)
}

pub fn report_from_nu(rho_grid: &[f64], shells: Vec<usize>, nu: Vec<Vec<f64>>) -> CoverReport {
    let usable: Vec<usize> = (0..shells.len()).filter(|&i| nu[i].iter().any(|&v| v > 0.0)).collect();
    let slopes: Vec<Option<f64>> = (0..rho_grid.len())
        .map(|j| {
            let xs: Vec<f64> = usable.iter().map(|&i| shells[i] as f64).collect();
            let ys: Vec<f64> = usable.iter().map(|&i| nu[i][j].ln()).collect();
            linear_fit(&xs, &ys).map(|f| f.slope)
        })
        .collect();
    let estimate = if usable.len() >= 5 {
        read_dimension(rho_grid, &slopes)
    } else {
        None
    };
    CoverReport {
        rho_grid: rho_grid.to_vec(),
        shells,
        nu,
        slopes,
        usable_shells: usable.len(),
        estimate,
        method: "dyadic-dp (exact over aligned dyadic covers; upper bound on ν)".into(),
    }
}

impl CoverReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "n,rho,nu")?;
        for (i, n) in self.shells.iter().enumerate() {
            for (j, r) in self.rho_grid.iter().enumerate() {
                writeln!(w, "{},{},{:e}", n, r, self.nu[i][j])?;
            }
        }
        Ok(())
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "estimate": self.estimate,
            "slopes": self.slopes,
            "rho_grid": self.rho_grid,
            "shells": self.shells,
            "usable_shells": self.usable_shells,
            "method": self.method,
        })
    }
}

/// `E` meets `[a, a + e^{nθ})^d` for every snapped anchor `a ∈ 𝓘_n(θ)` and
/// every `n ∈ [k, n_max]`.
pub fn thick_set_check<S: LatticeSet + ?Sized>(set: &S, theta: f64, k: usize, n_max: usize) -> Result<bool> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(param("theta", "must lie in (0, 1)"));
    }
    let d = set.dim();
    for n in k..=n_max {
        let axis = skeleton_axis(theta, n);
        let width = ((n as f64 * theta).exp().ceil() as i64).max(1);
        let total = axis.len().pow(d as u32);
        for f in 0..total {
            let mut rest = f;
            let lo: Vec<i64> = (0..d)
                .map(|_| {
                    let v = axis[rest % axis.len()];
                    rest /= axis.len();
                    v
                })
                .collect();
            let hi: Vec<i64> = lo.iter().map(|&c| c + width - 1).collect();
            if set.count_box(&lo, &hi) == 0 {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// `μ_n(E)`: points `(s, j)` with `e^n < s ≤ e^{n+1}` and `j ∈ [0, e^{n(1−γ)})^d`.
/// Coordinate 0 is time.
pub fn density_measure<S: LatticeSet + ?Sized>(set: &S, gamma: f64, n: usize) -> Result<u64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(param("gamma", "must lie in (0, 1)"));
    }
    let nf = n as f64;
    let d1 = set.dim();
    let s_lo = nf.exp().floor() as i64 + 1;
    let s_hi = (nf + 1.0).exp().floor() as i64;
    let j_hi = (nf * (1.0 - gamma)).exp().ceil() as i64 - 1;
    let mut lo = vec![0i64; d1];
    let mut hi = vec![j_hi; d1];
    lo[0] = s_lo;
    hi[0] = s_hi;
    Ok(set.count_box(&lo, &hi))
}

/// `ν̂ / (e^{−nd(1−γ)−n} μ_n)` at `ρ = d + 1 − dγ`, using the shell that holds
/// the counted points. `None` when `μ_n = 0`.
pub fn density_ratio<S: LatticeSet + ?Sized>(set: &S, gamma: f64, n: usize) -> Result<Option<f64>> {
    let mu = density_measure(set, gamma, n)?;
    if mu == 0 {
        return Ok(None);
    }
    let d = (set.dim() - 1) as f64;
    let nf = n as f64;
    let rho = d + 1.0 - d * gamma;
    let nu = cover_functional(set, rho, n + 1)?;
    Ok(Some(nu / ((-nf * d * (1.0 - gamma) - nf).exp() * mu as f64)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shell_conventions() {
        assert_eq!(shell_index(&[0.0, 0.0]), 0);
        let e2 = 2f64.exp();
        assert_eq!(shell_index(&[e2, 0.0]), 3);
        assert_eq!(shell_index(&[-e2, 0.0]), 2);
        assert!(shell(3, 2).contains(&[e2, 0.5]));
    }

    #[test]
    fn int_shell_matches_real_shell() {
        for x in -25i64..25 {
            for y in -25i64..25 {
                let n = shell_index(&[x as f64, y as f64]);
                assert!(shell(n, 2).contains_int(&[x, y]));
                assert!(!shell(n + 1, 2).contains_int(&[x, y]));
            }
        }
    }

    #[test]
    fn single_point_costs_one_unit_box() {
        let c = IntCloud::new(2, vec![vec![5, 0]]);
        let n = 2;
        for &rho in &[0.5, 1.0, 1.7] {
            let v = cover_functional(&c, rho, n).unwrap();
            assert!((v - (-(n as f64) * rho).exp()).abs() < 1e-14);
        }
    }

    #[test]
    fn cloud_counts_match_scan() {
        let pts: Vec<Vec<i64>> = (0..200).map(|i| vec![(i * 37 % 41) - 20, (i * 13 % 29) - 14]).collect();
        let c = IntCloud::new(2, pts.clone());
        for &(lo, s) in &[([-16i64, -16i64], 16i64), ([0, 0], 8), ([-4, 8], 4), ([3, -5], 1)] {
            let want = c
                .points()
                .iter()
                .filter(|p| (0..2).all(|i| p[i] >= lo[i] && p[i] < lo[i] + s))
                .count() as u64;
            assert_eq!(c.count_in(&lo, s), want);
        }
        assert_eq!(
            c.count_box(&[-7, -3], &[9, 11]),
            c.points()
                .iter()
                .filter(|p| p[0] >= -7 && p[0] <= 9 && p[1] >= -3 && p[1] <= 11)
                .count() as u64
        );
    }

    #[test]
    fn skeleton_counts_and_placement() {
        let sk = skeleton(0.5, 2, 3..=5).unwrap();
        for (n, axis) in &sk.levels {
            let nf = *n as f64;
            let want = (nf * 0.5).exp().ceil() as i64;
            assert!((axis.len() as i64 - want).abs() <= 1);
            assert!(axis.iter().all(|&a| a as f64 >= nf.exp().floor() && (a as f64) < (nf + 1.0).exp()));
        }
        let cloud = sk.to_cloud();
        assert_eq!(cloud.count_in(&[0, 0], 512), sk.count_in(&[0, 0], 512));
    }

    #[test]
    fn thick_set_cases() {
        let sk = skeleton(0.5, 2, 2..=5).unwrap();
        assert!(thick_set_check(&sk, 0.5, 2, 5).unwrap());
        assert!(!thick_set_check(&IntCloud::new(2, vec![]), 0.5, 2, 5).unwrap());
        let mut pts = sk.to_cloud().points().to_vec();
        let a = skeleton_axis(0.5, 2)[0];
        let w = 2f64.exp().sqrt().ceil() as i64;
        pts.retain(|p| !(p[0] >= a && p[0] < a + w && p[1] >= a && p[1] < a + w));
        assert!(!thick_set_check(&IntCloud::new(2, pts), 0.5, 2, 5).unwrap());
    }

    #[test]
    fn density_measure_counts() {
        let one = IntCloud::new(3, vec![vec![10, 0, 0]]);
        assert_eq!(density_measure(&one, 0.5, 2).unwrap(), 1);
        let slab = FullLattice { d: 3 };
        let n = 3;
        let times = (4f64.exp().floor() - 3f64.exp().floor()) as u64;
        let j = (3.0f64 * 0.5).exp().ceil() as u64;
        assert_eq!(density_measure(&slab, 0.5, n).unwrap(), times * j * j);
    }

    #[test]
    fn block_fixture_is_disjoint_and_in_shells() {
        let f = block_lemma_fixture(2.0, 1, 3, 2..=4).unwrap();
        for (i, (a, b)) in f.boxes.iter().enumerate() {
            for (c, e) in f.boxes.iter().skip(i + 1) {
                assert!((0..3).any(|x| b[x] < c[x] || e[x] < a[x]));
            }
        }
        for (a, b) in &f.boxes {
            let n1 = shell_index(&a.iter().map(|&v| v as f64).collect::<Vec<_>>());
            let n2 = shell_index(&b.iter().map(|&v| v as f64).collect::<Vec<_>>());
            assert_eq!(n1, n2);
        }
    }
}
