//! Primal-dual path-following with Nesterov-Todd scaling and a Mehrotra
//! predictor-corrector step.
//!
//! Dual problem: minimize `b'y` subject to `Z = A*(y) - C` PSD and `B'y = d`.
//! Free variables are removed from the Newton system with a QR factorization
//! of `B`, computed once per solve.

use alloc::vec;
use alloc::vec::Vec;

use dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::llt::factor::{cholesky_in_place, cholesky_in_place_scratch, LltRegularization};
use faer::linalg::householder;
use faer::linalg::triangular_solve;
use faer::{Conj, Mat, MatMut, MatRef, Par, Side};

use super::{IterationStats, SdpError, SdpProblem, SdpSolution, SdpStatus, SolverOptions};
use crate::math::{powi, sqrt};

/// Relative pivot size below which a column of `B` counts as dependent.
const RANK_TOLERANCE: f64 = 1e-10;
/// Both step lengths below this for this many iterations means no progress.
const STALL_STEP: f64 = 1e-9;
const STALL_LIMIT: usize = 5;
const REFINEMENT_STEPS: usize = 3;

struct Block {
    n: usize,
    c: Mat<f64>,
    /// Constraints with a nonzero entry in this block, ascending.
    cons: Vec<usize>,
    /// Entries `(i, j, v)` with `i <= j`, parallel to `cons`.
    entries: Vec<Vec<(usize, usize, f64)>>,
}

struct Data {
    m: usize,
    p: usize,
    blocks: Vec<Block>,
    b: Vec<f64>,
    d: Vec<f64>,
    /// Sparse columns of `B`.
    bcols: Vec<Vec<(usize, f64)>>,
    norm_b: f64,
    norm_c: f64,
}

/// Sparse `(row, col, value)` entries of one block.
type Entries = Vec<(usize, usize, f64)>;

fn coalesce(mut v: Vec<(usize, usize, f64)>) -> Vec<(usize, usize, f64)> {
    v.sort_by_key(|e| (e.0, e.1));
    let mut out: Vec<(usize, usize, f64)> = Vec::with_capacity(v.len());
    for e in v {
        match out.last_mut() {
            Some(last) if last.0 == e.0 && last.1 == e.1 => last.2 += e.2,
            _ => out.push(e),
        }
    }
    out.retain(|e| e.2 != 0.0);
    out
}

/// Symmetric matrix of a list of functional entries.
fn entries_matrix(n: usize, entries: &[(usize, usize, f64)]) -> Mat<f64> {
    let mut a = Mat::zeros(n, n);
    for &(i, j, v) in entries {
        if i == j {
            a[(i, i)] += v;
        } else {
            a[(i, j)] += v / 2.0;
            a[(j, i)] += v / 2.0;
        }
    }
    a
}

fn frob(a: &Mat<f64>) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for &v in a.col_as_slice(j) {
            s += v * v;
        }
    }
    sqrt(s)
}

fn inner(a: &Mat<f64>, b: &Mat<f64>) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for (x, y) in a.col_as_slice(j).iter().zip(b.col_as_slice(j)) {
            s += x * y;
        }
    }
    s
}

fn vnorm(v: &[f64]) -> f64 {
    sqrt(v.iter().map(|x| x * x).sum())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn symmetrize(a: &mut Mat<f64>) {
    let n = a.nrows();
    for j in 0..n {
        for i in 0..j {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

impl Data {
    fn new(p: &SdpProblem) -> Data {
        let m = p.constraints.len();
        let nb = p.blocks.len();
        let mut per_block: Vec<Vec<(usize, Entries)>> = (0..nb).map(|_| Vec::new()).collect();
        let mut bcols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); p.free_vars];
        for (k, con) in p.constraints.iter().enumerate() {
            let mut by_block: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); nb];
            for e in &con.functional.entries {
                by_block[e.block].push((e.row, e.col, e.value));
            }
            for (blk, list) in by_block.into_iter().enumerate() {
                let list = coalesce(list);
                if !list.is_empty() {
                    per_block[blk].push((k, list));
                }
            }
            let mut fr = con.functional.free.clone();
            fr.sort_by_key(|f| f.0);
            for (var, v) in fr {
                match bcols[var].last_mut() {
                    Some(last) if last.0 == k => last.1 += v,
                    _ => bcols[var].push((k, v)),
                }
            }
        }
        let mut cobj: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); nb];
        for e in &p.objective.entries {
            cobj[e.block].push((e.row, e.col, e.value));
        }
        let mut d = vec![0.0; p.free_vars];
        for &(k, v) in &p.objective.free {
            d[k] += v;
        }
        let blocks: Vec<Block> = per_block
            .into_iter()
            .zip(cobj)
            .zip(&p.blocks)
            .map(|((list, obj), &n)| {
                let (cons, entries) = list.into_iter().unzip();
                Block { n, c: entries_matrix(n, &coalesce(obj)), cons, entries }
            })
            .collect();
        let b: Vec<f64> = p.constraints.iter().map(|c| c.rhs).collect();
        let norm_b = vnorm(&b);
        let norm_c = sqrt(blocks.iter().map(|bl| powi(frob(&bl.c), 2)).sum::<f64>()) + vnorm(&d);
        Data { m, p: p.free_vars, blocks, b, d, bcols, norm_b, norm_c }
    }

    /// `A(X)`
    fn apply_a(&self, x: &[Mat<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        for (blk, xb) in self.blocks.iter().zip(x) {
            for (&k, ent) in blk.cons.iter().zip(&blk.entries) {
                let mut s = 0.0;
                for &(i, j, v) in ent {
                    s += v * xb[(i, j)];
                }
                out[k] += s;
            }
        }
        out
    }

    /// `A*(y)`
    fn apply_at(&self, y: &[f64]) -> Vec<Mat<f64>> {
        self.blocks
            .iter()
            .map(|blk| {
                let mut a = Mat::zeros(blk.n, blk.n);
                for (&k, ent) in blk.cons.iter().zip(&blk.entries) {
                    let yk = y[k];
                    if yk == 0.0 {
                        continue;
                    }
                    for &(i, j, v) in ent {
                        if i == j {
                            a[(i, i)] += yk * v;
                        } else {
                            let h = 0.5 * yk * v;
                            a[(i, j)] += h;
                            a[(j, i)] += h;
                        }
                    }
                }
                a
            })
            .collect()
    }

    /// `A(W A*(y) W)` without forming the Schur complement.
    fn apply_schur(&self, w: &[Mat<f64>], y: &[f64]) -> Vec<f64> {
        let mids: Vec<Mat<f64>> = self.apply_at(y).iter().zip(w).map(|(a, w)| w * a * w).collect();
        self.apply_a(&mids)
    }

    fn apply_b(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        for (col, &uk) in self.bcols.iter().zip(u) {
            for &(k, v) in col {
                out[k] += v * uk;
            }
        }
        out
    }

    fn apply_bt(&self, y: &[f64]) -> Vec<f64> {
        self.bcols.iter().map(|col| col.iter().map(|&(k, v)| v * y[k]).sum()).collect()
    }

    /// Lower triangle of the Schur complement `M_ij = <A_i, W A_j W>`,
    /// mirrored to full storage.
    fn schur(&self, w: &[Mat<f64>], out: &mut Mat<f64>) {
        out.fill(0.0);
        for (blk, wb) in self.blocks.iter().zip(w) {
            let n = blk.n;
            let mut g = Mat::<f64>::zeros(n, n);
            for (t, &j) in blk.cons.iter().enumerate() {
                g.fill(0.0);
                // Upper triangle of W A_j W, one symmetric outer product per entry.
                for &(p, q, v) in &blk.entries[t] {
                    if p == q {
                        for c in 0..n {
                            let a = v * wb[(c, p)];
                            let wp = &wb.col_as_slice(p)[..=c];
                            for (gr, wr) in g.col_as_slice_mut(c)[..=c].iter_mut().zip(wp) {
                                *gr += a * wr;
                            }
                        }
                    } else {
                        let h = 0.5 * v;
                        for c in 0..n {
                            let a = h * wb[(c, q)];
                            let bq = h * wb[(c, p)];
                            let wp = &wb.col_as_slice(p)[..=c];
                            let wq = &wb.col_as_slice(q)[..=c];
                            for ((gr, x), y) in g.col_as_slice_mut(c)[..=c].iter_mut().zip(wp).zip(wq) {
                                *gr += a * x + bq * y;
                            }
                        }
                    }
                }
                for (s, &i) in blk.cons[t..].iter().enumerate() {
                    let mut acc = 0.0;
                    for &(r, c, v) in &blk.entries[t + s] {
                        acc += v * g[(r, c)];
                    }
                    out[(i, j)] += acc;
                }
            }
        }
        let m = out.nrows();
        for j in 0..m {
            for i in j + 1..m {
                out[(j, i)] = out[(i, j)];
            }
        }
    }
}

/// QR factorization `B P = Q [R; 0]` used to eliminate the free variables.
struct FreeElim {
    basis: Mat<f64>,
    coeff: Mat<f64>,
    /// Leading `rank x rank` triangle of `R`.
    r: Mat<f64>,
    rank: usize,
    /// `perm[k]` is the original index of pivoted column `k`.
    perm: Vec<usize>,
}

impl FreeElim {
    fn new(data: &Data) -> Option<FreeElim> {
        if data.p == 0 {
            return None;
        }
        let mut bm = Mat::<f64>::zeros(data.m, data.p);
        for (k, col) in data.bcols.iter().enumerate() {
            for &(i, v) in col {
                bm[(i, k)] += v;
            }
        }
        let qr = bm.col_piv_qr();
        let rfull = qr.thin_R();
        let size = rfull.nrows().min(rfull.ncols());
        let top = if size > 0 { rfull[(0, 0)].abs() } else { 0.0 };
        let mut rank = 0;
        while rank < size && rfull[(rank, rank)].abs() > RANK_TOLERANCE * top {
            rank += 1;
        }
        let r = rfull.get(..rank, ..rank).to_owned();
        let (fwd, _) = qr.P().arrays();
        Some(FreeElim {
            basis: qr.Q_basis().to_owned(),
            coeff: qr.Q_coeff().to_owned(),
            r,
            rank,
            perm: fwd.to_vec(),
        })
    }

    fn apply_qt(&self, mat: MatMut<'_, f64>) {
        let req = householder::apply_block_householder_sequence_transpose_on_the_left_in_place_scratch::<f64>(
            self.basis.nrows(),
            self.coeff.nrows(),
            mat.ncols(),
        );
        let mut buf = MemBuffer::new(req);
        householder::apply_block_householder_sequence_transpose_on_the_left_in_place_with_conj(
            self.basis.as_ref(),
            self.coeff.as_ref(),
            Conj::No,
            mat,
            Par::Seq,
            MemStack::new(&mut buf),
        );
    }

    fn apply_q(&self, mat: MatMut<'_, f64>) {
        let req = householder::apply_block_householder_sequence_on_the_left_in_place_scratch::<f64>(
            self.basis.nrows(),
            self.coeff.nrows(),
            mat.ncols(),
        );
        let mut buf = MemBuffer::new(req);
        householder::apply_block_householder_sequence_on_the_left_in_place_with_conj(
            self.basis.as_ref(),
            self.coeff.as_ref(),
            Conj::No,
            mat,
            Par::Seq,
            MemStack::new(&mut buf),
        );
    }
}

fn transpose_in_place(a: &mut Mat<f64>) {
    let n = a.nrows();
    for j in 0..n {
        for i in j + 1..n {
            let t = a[(i, j)];
            a[(i, j)] = a[(j, i)];
            a[(j, i)] = t;
        }
    }
}

/// Factored Newton system.
struct Newton<'a> {
    elim: Option<&'a FreeElim>,
    data: &'a Data,
    /// Scaling matrices, for refinement against the exact operator.
    w: &'a [Mat<f64>],
    /// `Q' M Q`, with the Cholesky factor of the trailing block in its lower
    /// triangle.
    h: Mat<f64>,
    rank: usize,
}

impl<'a> Newton<'a> {
    fn factor(mut h: Mat<f64>, data: &'a Data, w: &'a [Mat<f64>], elim: Option<&'a FreeElim>) -> Option<Newton<'a>> {
        let rank = elim.map_or(0, |e| e.rank);
        if let Some(e) = elim {
            e.apply_qt(h.as_mut());
            transpose_in_place(&mut h);
            e.apply_qt(h.as_mut());
        }
        let m = h.nrows();
        let k = m - rank;
        let orig = h.as_ref().submatrix(rank, rank, k, k).to_owned();
        let max_diag = (0..k).fold(0.0f64, |a, i| a.max(orig[(i, i)].abs()));
        let req = cholesky_in_place_scratch::<f64>(k, Par::Seq, Default::default());
        let mut buf = MemBuffer::new(req);
        for shift in [0.0, 1e-12, 1e-10, 1e-8, 1e-6] {
            let mut sub = h.as_mut().submatrix_mut(rank, rank, k, k);
            if shift > 0.0 {
                sub.copy_from(&orig);
                for i in 0..k {
                    sub[(i, i)] += shift * max_diag.max(1.0);
                }
            }
            let ok = cholesky_in_place(sub, LltRegularization::default(), Par::Seq, MemStack::new(&mut buf), Default::default());
            if ok.is_ok() {
                return Some(Newton { elim, data, w, h, rank });
            }
        }
        None
    }

    /// Solves `M dy - B du = rhs`, `B' dy = rf` with iterative refinement
    /// against the unshifted operator.
    fn solve(&self, rhs: &[f64], rf: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (mut dy, mut du) = self.solve_once(rhs, rf);
        let size = vnorm(rhs) + vnorm(rf);
        for _ in 0..REFINEMENT_STEPS {
            let my = self.data.apply_schur(self.w, &dy);
            let bu = self.data.apply_b(&du);
            let r1: Vec<f64> = (0..dy.len()).map(|i| rhs[i] - (my[i] - bu[i])).collect();
            let bty = self.data.apply_bt(&dy);
            let r2: Vec<f64> = rf.iter().zip(&bty).map(|(a, b)| a - b).collect();
            if vnorm(&r1) + vnorm(&r2) <= 1e-14 * size.max(1.0) {
                break;
            }
            let (cy, cu) = self.solve_once(&r1, &r2);
            dy.iter_mut().zip(&cy).for_each(|(a, b)| *a += b);
            du.iter_mut().zip(&cu).for_each(|(a, b)| *a += b);
        }
        (dy, du)
    }

    fn solve_once(&self, rhs: &[f64], rf: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let m = self.h.nrows();
        let r = self.rank;
        let mut ht = Mat::<f64>::from_fn(m, 1, |i, _| rhs[i]);
        let mut yt = Mat::<f64>::zeros(m, 1);
        let mut du = vec![0.0; rf.len()];
        let Some(e) = self.elim else {
            yt.copy_from(&ht);
            self.chol_solve(yt.as_mut());
            return ((0..m).map(|i| yt[(i, 0)]).collect(), du);
        };
        e.apply_qt(ht.as_mut());
        // R' y1 = P' rf
        let mut y1 = Mat::<f64>::from_fn(r, 1, |i, _| rf[e.perm[i]]);
        triangular_solve::solve_lower_triangular_in_place(e.r.transpose(), y1.as_mut(), Par::Seq);
        // H22 w = h2 - H21 y1
        let mut w = Mat::<f64>::from_fn(m - r, 1, |i, _| ht[(r + i, 0)]);
        let h21: MatRef<'_, f64> = self.h.as_ref().submatrix(r, 0, m - r, r);
        if r > 0 {
            w -= h21 * &y1;
        }
        self.chol_solve(w.as_mut());
        for i in 0..r {
            yt[(i, 0)] = y1[(i, 0)];
        }
        for i in 0..m - r {
            yt[(r + i, 0)] = w[(i, 0)];
        }
        // R du_perm = H11 y1 + H12 w - h1
        let h11 = self.h.as_ref().submatrix(0, 0, r, r);
        let mut t = h11 * &y1 + h21.transpose() * &w;
        for i in 0..r {
            t[(i, 0)] -= ht[(i, 0)];
        }
        triangular_solve::solve_upper_triangular_in_place(e.r.as_ref(), t.as_mut(), Par::Seq);
        for i in 0..r {
            du[e.perm[i]] = t[(i, 0)];
        }
        e.apply_q(yt.as_mut());
        ((0..m).map(|i| yt[(i, 0)]).collect(), du)
    }

    fn chol_solve(&self, rhs: MatMut<'_, f64>) {
        let m = self.h.nrows();
        let l = self.h.as_ref().submatrix(self.rank, self.rank, m - self.rank, m - self.rank);
        let mut rhs = rhs;
        triangular_solve::solve_lower_triangular_in_place(l, rhs.as_mut(), Par::Seq);
        triangular_solve::solve_upper_triangular_in_place(l.transpose(), rhs.as_mut(), Par::Seq);
    }
}

/// Nesterov-Todd scaling of one block: `W = G G'`, `G^-1 X G^-T = G' Z G = diag(d)`.
struct Scaling {
    g: Mat<f64>,
    w: Mat<f64>,
    d: Vec<f64>,
}

fn nt_scaling(x: &Mat<f64>, z: &Mat<f64>) -> Option<Scaling> {
    let n = x.nrows();
    let llt = x.llt(Side::Lower).ok()?;
    let l = llt.L().to_owned();
    let mut lzl = l.transpose() * z * &l;
    symmetrize(&mut lzl);
    let evd = lzl.self_adjoint_eigen(Side::Lower).ok()?;
    let lam: Vec<f64> = (0..n).map(|i| evd.S()[i]).collect();
    if lam.iter().any(|&v| v.is_nan() || v <= 0.0 || v.is_infinite()) {
        return None;
    }
    let mut g = &l * evd.U();
    for (j, &lj) in lam.iter().enumerate() {
        let s = 1.0 / sqrt(sqrt(lj));
        for v in g.col_as_slice_mut(j) {
            *v *= s;
        }
    }
    let mut w = &g * g.transpose();
    symmetrize(&mut w);
    Some(Scaling { g, w, d: lam.iter().map(|&v| sqrt(v)).collect() })
}

/// Largest `alpha` with `diag(d) + alpha * dm` PSD (infinite when unbounded).
fn max_step(d: &[f64], dm: &Mat<f64>) -> Option<f64> {
    let n = d.len();
    let s: Vec<f64> = d.iter().map(|&v| 1.0 / sqrt(v)).collect();
    let scaled = Mat::<f64>::from_fn(n, n, |i, j| s[i] * dm[(i, j)] * s[j]);
    let ev = scaled.self_adjoint_eigenvalues(Side::Lower).ok()?;
    let lo = ev[0];
    if !lo.is_finite() {
        return None;
    }
    Some(if lo < 0.0 { -1.0 / lo } else { f64::INFINITY })
}

struct Direction {
    dx: Vec<Mat<f64>>,
    dz: Vec<Mat<f64>>,
    dxs: Vec<Mat<f64>>,
    dzs: Vec<Mat<f64>>,
    dy: Vec<f64>,
    du: Vec<f64>,
}

struct State {
    x: Vec<Mat<f64>>,
    z: Vec<Mat<f64>>,
    y: Vec<f64>,
    u: Vec<f64>,
}

struct Residuals {
    rp: Vec<f64>,
    rd: Vec<Mat<f64>>,
    rf: Vec<f64>,
}

fn residuals(data: &Data, s: &State) -> Residuals {
    let ax = data.apply_a(&s.x);
    let bu = data.apply_b(&s.u);
    let rp = (0..data.m).map(|i| data.b[i] - ax[i] - bu[i]).collect();
    let mut rd = data.apply_at(&s.y);
    for ((r, z), blk) in rd.iter_mut().zip(&s.z).zip(&data.blocks) {
        *r -= z;
        *r -= &blk.c;
    }
    let bty = data.apply_bt(&s.y);
    let rf = (0..data.p).map(|k| data.d[k] - bty[k]).collect();
    Residuals { rp, rd, rf }
}

fn objectives(data: &Data, s: &State) -> (f64, f64) {
    let pobj = data.blocks.iter().zip(&s.x).map(|(b, x)| inner(&b.c, x)).sum::<f64>() + dot(&data.d, &s.u);
    (pobj, dot(&data.b, &s.y))
}

fn initial_point(data: &Data) -> State {
    let mut x = Vec::new();
    let mut z = Vec::new();
    for blk in &data.blocks {
        let n = blk.n as f64;
        let mut xi = 10.0f64.max(sqrt(n));
        let mut eta = 10.0f64.max(sqrt(n)).max(frob(&blk.c));
        for (&k, ent) in blk.cons.iter().zip(&blk.entries) {
            let na = frob(&entries_matrix(blk.n, ent));
            xi = xi.max(n * (1.0 + data.b[k].abs()) / (1.0 + na));
            eta = eta.max(na);
        }
        x.push(Mat::<f64>::identity(blk.n, blk.n) * faer::Scale(xi));
        z.push(Mat::<f64>::identity(blk.n, blk.n) * faer::Scale(eta));
    }
    State { x, z, y: vec![0.0; data.m], u: vec![0.0; data.p] }
}

/// Newton direction for the scaled complementarity right-hand side `rt`.
fn direction(
    data: &Data,
    sc: &[Scaling],
    newton: &Newton<'_>,
    res: &Residuals,
    rt: &[Mat<f64>],
) -> Direction {
    // rhs = A(G rt G' - W Rd W) - rp
    let mids: Vec<Mat<f64>> = sc
        .iter()
        .zip(rt)
        .zip(&res.rd)
        .map(|((s, r), rd)| &s.g * r * s.g.transpose() - &s.w * rd * &s.w)
        .collect();
    let a = data.apply_a(&mids);
    let rhs: Vec<f64> = a.iter().zip(&res.rp).map(|(x, r)| x - r).collect();
    let (dy, du) = newton.solve(&rhs, &res.rf);
    let mut dz = data.apply_at(&dy);
    let mut dx = Vec::new();
    let mut dxs = Vec::new();
    let mut dzs = Vec::new();
    for (((dzb, s), r), rd) in dz.iter_mut().zip(sc).zip(rt).zip(&res.rd) {
        *dzb += rd;
        let mut zt = s.g.transpose() * &*dzb * &s.g;
        symmetrize(&mut zt);
        let xt = r - &zt;
        let mut xb = &s.g * &xt * s.g.transpose();
        symmetrize(&mut xb);
        dx.push(xb);
        dxs.push(xt);
        dzs.push(zt);
    }
    Direction { dx, dz, dxs, dzs, dy, du }
}

fn step_lengths(sc: &[Scaling], dir: &Direction) -> Option<(f64, f64)> {
    let mut ap = f64::INFINITY;
    let mut ad = f64::INFINITY;
    for ((s, xt), zt) in sc.iter().zip(&dir.dxs).zip(&dir.dzs) {
        ap = ap.min(max_step(&s.d, xt)?);
        ad = ad.min(max_step(&s.d, zt)?);
    }
    Some((ap, ad))
}

fn finish(status: SdpStatus, s: State, stats: IterationStats, pobj: f64, dobj: f64, iterations: usize, history: Vec<IterationStats>) -> SdpSolution {
    SdpSolution {
        status,
        blocks: s.x,
        free: s.u,
        dual: s.y,
        slack: s.z,
        primal_objective: pobj,
        dual_objective: dobj,
        primal_residual: stats.primal_residual,
        dual_residual: stats.dual_residual,
        rel_gap: stats.rel_gap,
        iterations,
        history,
    }
}

/// Solves `problem`; deterministic for identical inputs and options.
///
/// Constraints without any coefficient are removed before the solve: a
/// nonzero right-hand side makes the problem infeasible, otherwise the row is
/// redundant and its dual value is zero.
pub fn solve(problem: &SdpProblem, opts: &SolverOptions) -> Result<SdpSolution, SdpError> {
    problem.validate()?;
    let empty: Vec<bool> = problem
        .constraints
        .iter()
        .map(|c| c.functional.entries.iter().all(|e| e.value == 0.0) && c.functional.free.iter().all(|f| f.1 == 0.0))
        .collect();
    if !empty.iter().any(|&e| e) {
        return Ok(solve_reduced(problem, opts));
    }
    let m = problem.constraints.len();
    if let Some(i) = (0..m).find(|&i| empty[i] && problem.constraints[i].rhs != 0.0) {
        let mut dual = vec![0.0; m];
        dual[i] = -1.0 / problem.constraints[i].rhs;
        return Ok(SdpSolution {
            status: SdpStatus::Infeasible,
            blocks: problem.blocks.iter().map(|&n| Mat::zeros(n, n)).collect(),
            free: vec![0.0; problem.free_vars],
            dual,
            slack: problem.blocks.iter().map(|&n| Mat::zeros(n, n)).collect(),
            primal_objective: f64::NAN,
            dual_objective: f64::NAN,
            primal_residual: f64::INFINITY,
            dual_residual: f64::INFINITY,
            rel_gap: f64::INFINITY,
            iterations: 0,
            history: Vec::new(),
        });
    }
    let mut reduced = problem.clone();
    reduced.constraints = problem.constraints.iter().zip(&empty).filter(|(_, &e)| !e).map(|(c, _)| c.clone()).collect();
    let mut sol = solve_reduced(&reduced, opts);
    let mut kept = sol.dual.into_iter();
    sol.dual = empty.iter().map(|&e| if e { 0.0 } else { kept.next().unwrap() }).collect();
    Ok(sol)
}

fn solve_reduced(problem: &SdpProblem, opts: &SolverOptions) -> SdpSolution {
    let data = Data::new(problem);
    let elim = FreeElim::new(&data);
    let mut s = initial_point(&data);
    let dim: usize = data.blocks.iter().map(|b| b.n).sum();
    let dimf = dim.max(1) as f64;
    let tol = opts.tolerance;
    let mut history = Vec::new();
    let mut stalled = 0;
    let mut schur = Mat::<f64>::zeros(data.m, data.m);
    let mut last_steps = (0.0, 0.0);
    let mut iter = 0;
    loop {
        let res = residuals(&data, &s);
        let (pobj, dobj) = objectives(&data, &s);
        let block_xz: Vec<f64> = s.x.iter().zip(&s.z).map(|(x, z)| inner(x, z)).collect();
        let xz: f64 = block_xz.iter().sum();
        let mu = xz / dimf;
        let rd_norm = sqrt(res.rd.iter().map(|r| powi(frob(r), 2)).sum::<f64>());
        let stats = IterationStats {
            primal_residual: vnorm(&res.rp) / (1.0 + data.norm_b),
            dual_residual: (rd_norm + vnorm(&res.rf)) / (1.0 + data.norm_c),
            rel_gap: (pobj - dobj).abs().max(xz) / (1.0 + pobj.abs() + dobj.abs()),
            mu,
            primal_step: last_steps.0,
            dual_step: last_steps.1,
        };
        history.push(stats);
        let finite = pobj.is_finite() && dobj.is_finite() && mu.is_finite();
        if !finite {
            return finish(SdpStatus::NumericalFailure, s, stats, pobj, dobj, iter, history);
        }
        let complementary = block_xz.iter().all(|v| v.abs() <= opts.complementarity);
        if stats.primal_residual <= tol && stats.dual_residual <= tol && stats.rel_gap <= tol && complementary {
            return finish(SdpStatus::Optimal, s, stats, pobj, dobj, iter, history);
        }
        // Improving dual ray: A*(y) - Z = C + Rd, B'y = d - rf, normalized to b'y = -1.
        if dobj < 0.0 {
            let mut ray = 0.0;
            for (rd, blk) in res.rd.iter().zip(&data.blocks) {
                ray += powi(frob(&(rd + &blk.c)), 2);
            }
            let bty: Vec<f64> = data.d.iter().zip(&res.rf).map(|(d, r)| d - r).collect();
            let ray = (sqrt(ray) + vnorm(&bty)) / -dobj;
            if ray <= tol {
                let scale = 1.0 / -dobj;
                s.y.iter_mut().for_each(|v| *v *= scale);
                s.z.iter_mut().for_each(|z| *z *= faer::Scale(scale));
                return finish(SdpStatus::Infeasible, s, stats, pobj, dobj, iter, history);
            }
        }
        // Primal ray: A(X) + Bu = b - rp, normalized to unit objective.
        if pobj > 0.0 {
            let axbu: Vec<f64> = data.b.iter().zip(&res.rp).map(|(b, r)| b - r).collect();
            if vnorm(&axbu) / pobj <= tol {
                let scale = 1.0 / pobj;
                s.x.iter_mut().for_each(|x| *x *= faer::Scale(scale));
                s.u.iter_mut().for_each(|v| *v *= scale);
                return finish(SdpStatus::Unbounded, s, stats, pobj, dobj, iter, history);
            }
        }
        if iter >= opts.max_iterations {
            return finish(SdpStatus::MaxIterations, s, stats, pobj, dobj, iter, history);
        }

        let Some(sc) = s.x.iter().zip(&s.z).map(|(x, z)| nt_scaling(x, z)).collect::<Option<Vec<_>>>() else {
            return finish(SdpStatus::NumericalFailure, s, stats, pobj, dobj, iter, history);
        };
        let w: Vec<Mat<f64>> = sc.iter().map(|c| c.w.clone()).collect();
        data.schur(&w, &mut schur);
        let Some(newton) = Newton::factor(core::mem::replace(&mut schur, Mat::zeros(0, 0)), &data, &w, elim.as_ref()) else {
            return finish(SdpStatus::NumericalFailure, s, stats, pobj, dobj, iter, history);
        };

        // Predictor: target complementarity zero.
        let rt_aff: Vec<Mat<f64>> = sc.iter().map(|c| Mat::from_fn(c.d.len(), c.d.len(), |i, j| if i == j { -c.d[i] } else { 0.0 })).collect();
        let aff = direction(&data, &sc, &newton, &res, &rt_aff);
        let Some((ap, ad)) = step_lengths(&sc, &aff) else {
            return finish(SdpStatus::NumericalFailure, s, stats, pobj, dobj, iter, history);
        };
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let mut mu_aff = 0.0;
        for ((c, xt), zt) in sc.iter().zip(&aff.dxs).zip(&aff.dzs) {
            let n = c.d.len();
            for j in 0..n {
                for i in 0..n {
                    let dg = if i == j { c.d[i] } else { 0.0 };
                    mu_aff += (dg + ap * xt[(i, j)]) * (dg + ad * zt[(i, j)]);
                }
            }
        }
        mu_aff /= dimf;
        let sigma = if mu > 0.0 { powi((mu_aff / mu).clamp(0.0, 1.0), 3) } else { 0.0 };

        // Corrector with second-order term.
        let rt: Vec<Mat<f64>> = sc
            .iter()
            .zip(&aff.dxs)
            .zip(&aff.dzs)
            .map(|((c, xt), zt)| {
                let n = c.d.len();
                let cross = xt * zt + zt * xt;
                Mat::from_fn(n, n, |i, j| {
                    let diag = if i == j { 2.0 * (sigma * mu - c.d[i] * c.d[i]) } else { 0.0 };
                    (diag - cross[(i, j)]) / (c.d[i] + c.d[j])
                })
            })
            .collect();
        let dir = direction(&data, &sc, &newton, &res, &rt);
        let Some((ap, ad)) = step_lengths(&sc, &dir) else {
            return finish(SdpStatus::NumericalFailure, s, stats, pobj, dobj, iter, history);
        };
        let ap = (opts.step_fraction * ap).min(1.0);
        let ad = (opts.step_fraction * ad).min(1.0);
        schur = newton.h;

        for (x, dx) in s.x.iter_mut().zip(&dir.dx) {
            *x += dx * faer::Scale(ap);
            symmetrize(x);
        }
        for (u, du) in s.u.iter_mut().zip(&dir.du) {
            *u += ap * du;
        }
        for (z, dz) in s.z.iter_mut().zip(&dir.dz) {
            *z += dz * faer::Scale(ad);
            symmetrize(z);
        }
        for (y, dy) in s.y.iter_mut().zip(&dir.dy) {
            *y += ad * dy;
        }
        last_steps = (ap, ad);
        iter += 1;
        if ap < STALL_STEP && ad < STALL_STEP {
            stalled += 1;
            if stalled >= STALL_LIMIT {
                return finish(SdpStatus::NumericalFailure, s, stats, pobj, dobj, iter, history);
            }
        } else {
            stalled = 0;
        }
    }
}
