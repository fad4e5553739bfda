//! Multiple-shooting linearization and condensing shared by the MPCC and
//! tracking-MPC controllers.
//!
//! Raw states start with position (3) and a scalar-first quaternion (4); the
//! remaining entries are Euclidean. The QP works on an error state where the
//! quaternion is replaced by a 3-vector `δφ` about a reference quaternion `q̄`:
//!
//! ```text
//! q = q̄ ⊗ (1, δφ/2) / ‖·‖,     δφ = 2 vec(r) / r_w,   r = q̄* ⊗ q
//! ```
//!
//! so error dimension = raw dimension − 1.

use nalgebra::{DMatrix, DVector, Matrix3x4, SMatrix, SVector, Vector3, Vector4};

pub type Quat = Vector4<f64>;

pub fn quat_mul(a: &Quat, b: &Quat) -> Quat {
    Quat::new(
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    )
}

pub fn quat_conj(q: &Quat) -> Quat {
    Quat::new(q[0], -q[1], -q[2], -q[3])
}

/// Matrix `L(a)` with `a ⊗ b = L(a) b`.
fn quat_left(a: &Quat) -> SMatrix<f64, 4, 4> {
    SMatrix::<f64, 4, 4>::new(
        a[0], -a[1], -a[2], -a[3], //
        a[1], a[0], -a[3], a[2], //
        a[2], a[3], a[0], -a[1], //
        a[3], -a[2], a[1], a[0],
    )
}

/// Attitude error `δφ` of `q` relative to `qbar`.
pub fn quat_boxminus(q: &Quat, qbar: &Quat) -> Vector3<f64> {
    let r = quat_mul(&quat_conj(qbar), q);
    Vector3::new(r[1], r[2], r[3]) * (2.0 / r[0])
}

pub fn quat_boxplus(qbar: &Quat, dphi: &Vector3<f64>) -> Quat {
    quat_mul(qbar, &Quat::new(1.0, 0.5 * dphi.x, 0.5 * dphi.y, 0.5 * dphi.z)).normalize()
}

/// `∂δφ/∂q` of [`quat_boxminus`] at `q`.
fn boxminus_jacobian(q: &Quat, qbar: &Quat) -> Matrix3x4<f64> {
    let lc = quat_left(&quat_conj(qbar));
    let r = lc * q;
    let w = r[0];
    let mut dr = Matrix3x4::zeros();
    for i in 0..3 {
        for j in 0..4 {
            dr[(i, j)] = 2.0 / w * (lc[(i + 1, j)] - r[i + 1] / w * lc[(0, j)]);
        }
    }
    dr
}

/// `∂q/∂δφ` of [`quat_boxplus`] at `δφ = 0`.
fn boxplus_jacobian(qbar: &Quat) -> SMatrix<f64, 4, 3> {
    let l = quat_left(qbar);
    l.fixed_view::<4, 3>(0, 1) * 0.5
}

pub fn boxminus<const NR: usize, const NX: usize>(x: &SVector<f64, NR>, xbar: &SVector<f64, NR>) -> SVector<f64, NX> {
    debug_assert_eq!(NX + 1, NR);
    let mut d = SVector::<f64, NX>::zeros();
    for i in 0..3 {
        d[i] = x[i] - xbar[i];
    }
    let q = x.fixed_rows::<4>(3).into_owned();
    let qb = xbar.fixed_rows::<4>(3).into_owned();
    d.fixed_rows_mut::<3>(3).copy_from(&quat_boxminus(&q, &qb));
    for i in 7..NR {
        d[i - 1] = x[i] - xbar[i];
    }
    d
}

pub fn boxplus<const NR: usize, const NX: usize>(xbar: &SVector<f64, NR>, d: &SVector<f64, NX>) -> SVector<f64, NR> {
    let mut x = *xbar;
    for i in 0..3 {
        x[i] += d[i];
    }
    let qb = xbar.fixed_rows::<4>(3).into_owned();
    let dphi = d.fixed_rows::<3>(3).into_owned();
    x.fixed_rows_mut::<4>(3).copy_from(&quat_boxplus(&qb, &dphi));
    for i in 7..NR {
        x[i] += d[i - 1];
    }
    x
}

/// `∂x/∂δx` at `δx = 0`.
pub fn expand_jacobian<const NR: usize, const NX: usize>(xbar: &SVector<f64, NR>) -> SMatrix<f64, NR, NX> {
    let mut e = SMatrix::<f64, NR, NX>::zeros();
    for i in 0..3 {
        e[(i, i)] = 1.0;
    }
    let qb = xbar.fixed_rows::<4>(3).into_owned();
    e.fixed_view_mut::<4, 3>(3, 3).copy_from(&boxplus_jacobian(&qb));
    for i in 7..NR {
        e[(i, i - 1)] = 1.0;
    }
    e
}

/// `∂(x ⊟ x̄)/∂x` at `x`.
pub fn contract_jacobian<const NR: usize, const NX: usize>(x: &SVector<f64, NR>, xbar: &SVector<f64, NR>) -> SMatrix<f64, NX, NR> {
    let mut p = SMatrix::<f64, NX, NR>::zeros();
    for i in 0..3 {
        p[(i, i)] = 1.0;
    }
    let q = x.fixed_rows::<4>(3).into_owned();
    let qb = xbar.fixed_rows::<4>(3).into_owned();
    p.fixed_view_mut::<3, 4>(3, 3).copy_from(&boxminus_jacobian(&q, &qb));
    for i in 7..NR {
        p[(i - 1, i)] = 1.0;
    }
    p
}

/// Continuous-time model on raw states.
pub trait Model<const NR: usize, const NU: usize> {
    fn rhs(&self, x: &SVector<f64, NR>, u: &SVector<f64, NU>) -> SVector<f64, NR>;
    fn jacobians(&self, x: &SVector<f64, NR>, u: &SVector<f64, NU>) -> (SMatrix<f64, NR, NR>, SMatrix<f64, NR, NU>);
}

fn normalize_quat<const NR: usize>(x: &mut SVector<f64, NR>) {
    let q = x.fixed_rows::<4>(3).into_owned();
    x.fixed_rows_mut::<4>(3).copy_from(&q.normalize());
}

/// One RK4 step with zero-order-hold input; quaternion renormalized.
pub fn rk4_step<M: Model<NR, NU>, const NR: usize, const NU: usize>(
    model: &M,
    x: &SVector<f64, NR>,
    u: &SVector<f64, NU>,
    h: f64,
) -> SVector<f64, NR> {
    let k1 = model.rhs(x, u);
    let k2 = model.rhs(&(x + k1 * (0.5 * h)), u);
    let k3 = model.rhs(&(x + k2 * (0.5 * h)), u);
    let k4 = model.rhs(&(x + k3 * h), u);
    let mut xn = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    normalize_quat(&mut xn);
    xn
}

/// RK4 step and its sensitivities with respect to the raw state and input
/// (before renormalization, which the error chart absorbs).
pub fn rk4_sensitivities<M: Model<NR, NU>, const NR: usize, const NU: usize>(
    model: &M,
    x: &SVector<f64, NR>,
    u: &SVector<f64, NU>,
    h: f64,
) -> (SVector<f64, NR>, SMatrix<f64, NR, NR>, SMatrix<f64, NR, NU>) {
    let id = SMatrix::<f64, NR, NR>::identity();
    let k1 = model.rhs(x, u);
    let (a1, b1) = model.jacobians(x, u);
    let x2 = x + k1 * (0.5 * h);
    let k2 = model.rhs(&x2, u);
    let (a2, b2) = model.jacobians(&x2, u);
    let k2x = a2 * (id + a1 * (0.5 * h));
    let k2u = a2 * b1 * (0.5 * h) + b2;
    let x3 = x + k2 * (0.5 * h);
    let k3 = model.rhs(&x3, u);
    let (a3, b3) = model.jacobians(&x3, u);
    let k3x = a3 * (id + k2x * (0.5 * h));
    let k3u = a3 * k2u * (0.5 * h) + b3;
    let x4 = x + k3 * h;
    let k4 = model.rhs(&x4, u);
    let (a4, b4) = model.jacobians(&x4, u);
    let k4x = a4 * (id + k3x * h);
    let k4u = a4 * k3u * h + b4;
    let mut xn = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    let phi = id + (a1 + k2x * 2.0 + k3x * 2.0 + k4x) * (h / 6.0);
    let gam = (b1 + k2u * 2.0 + k3u * 2.0 + k4u) * (h / 6.0);
    normalize_quat(&mut xn);
    (xn, phi, gam)
}

/// Affine error-state dynamics `δx⁺ = A δx + B δu + d` of one shooting interval.
#[derive(Debug, Clone)]
pub struct LinearStage<const NX: usize, const NU: usize> {
    pub a: SMatrix<f64, NX, NX>,
    pub b: SMatrix<f64, NX, NU>,
    pub d: SVector<f64, NX>,
}

/// Linearize the interval from `xbar` under `ubar`, expressing the result
/// relative to the next linearization state `xbar_next`.
pub fn linearize_stage<M: Model<NR, NU>, const NR: usize, const NX: usize, const NU: usize>(
    model: &M,
    xbar: &SVector<f64, NR>,
    ubar: &SVector<f64, NU>,
    xbar_next: &SVector<f64, NR>,
    h: f64,
) -> LinearStage<NX, NU> {
    let (xn, phi, gam) = rk4_sensitivities(model, xbar, ubar, h);
    let e = expand_jacobian::<NR, NX>(xbar);
    let p = contract_jacobian::<NR, NX>(&xn, xbar_next);
    LinearStage { a: p * phi * e, b: p * gam, d: boxminus::<NR, NX>(&xn, xbar_next) }
}

/// Gauss–Newton state cost of one stage: `‖r + J δx‖² + lᵀ δx`.
#[derive(Debug, Clone)]
pub struct StageCost<const NX: usize> {
    pub residual: DVector<f64>,
    pub jacobian: DMatrix<f64>,
    pub linear: SVector<f64, NX>,
}

/// Input cost `½ uᵀ R u + qᵀ u` on the absolute input of one stage.
#[derive(Debug, Clone)]
pub struct InputCost<const NU: usize> {
    pub r: SMatrix<f64, NU, NU>,
    pub q: SVector<f64, NU>,
}

/// Dense condensed problem in the input deviations `δu = (δu_0, …, δu_{N-1})`.
#[derive(Debug, Clone)]
pub struct Condensed<const NX: usize, const NU: usize> {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    /// Free response `c_k` (k = 0..N) of the error state with `δu = 0`.
    pub offsets: Vec<SVector<f64, NX>>,
    /// `gmat[k][j] = ∂δx_k/∂δu_j` for `j < k`.
    pub gmat: Vec<Vec<SMatrix<f64, NX, NU>>>,
}

impl<const NX: usize, const NU: usize> Condensed<NX, NU> {
    pub fn horizon(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Predicted error states for input deviations `du`.
    pub fn states(&self, du: &DVector<f64>) -> Vec<SVector<f64, NX>> {
        (0..self.offsets.len())
            .map(|k| {
                let mut x = self.offsets[k];
                for (j, g) in self.gmat[k].iter().enumerate() {
                    x += g * du.fixed_rows::<NU>(j * NU);
                }
                x
            })
            .collect()
    }

    /// Row of `∂δx_k[i]/∂δu` (length `N·NU`).
    pub fn state_row(&self, k: usize, i: usize) -> DVector<f64> {
        let n = self.horizon() * NU;
        let mut row = DVector::zeros(n);
        for (j, g) in self.gmat[k].iter().enumerate() {
            for c in 0..NU {
                row[j * NU + c] = g[(i, c)];
            }
        }
        row
    }
}

/// Eliminate the states. `state_costs[k]` applies to `δx_{k+1}` (k = 0..N-1),
/// `input_costs[k]` to `u_k`, and `ubar[k]` is the linearization input.
pub fn condense<const NX: usize, const NU: usize>(
    stages: &[LinearStage<NX, NU>],
    dx0: &SVector<f64, NX>,
    state_costs: &[StageCost<NX>],
    input_costs: &[InputCost<NU>],
    ubar: &[SVector<f64, NU>],
) -> Condensed<NX, NU> {
    let n = stages.len();
    assert_eq!(state_costs.len(), n);
    assert_eq!(input_costs.len(), n);
    assert_eq!(ubar.len(), n);
    let nz = n * NU;

    let mut offsets = Vec::with_capacity(n + 1);
    offsets.push(*dx0);
    let mut gmat: Vec<Vec<SMatrix<f64, NX, NU>>> = vec![Vec::new()];
    for (k, st) in stages.iter().enumerate() {
        offsets.push(st.a * offsets[k] + st.d);
        let mut row: Vec<SMatrix<f64, NX, NU>> = gmat[k].iter().map(|g| st.a * g).collect();
        row.push(st.b);
        gmat.push(row);
    }

    let mut h = DMatrix::zeros(nz, nz);
    let mut g = DVector::zeros(nz);
    for k in 0..n {
        let cost = &state_costs[k];
        let nr = cost.residual.len();
        let blocks = &gmat[k + 1];
        // M = J G_{k+1, ·}, only the first k+1 input blocks are nonzero
        let width = blocks.len() * NU;
        let mut m = DMatrix::zeros(nr, width);
        for (j, gb) in blocks.iter().enumerate() {
            let jg = &cost.jacobian * DMatrix::from_column_slice(NX, NU, gb.as_slice());
            m.view_mut((0, j * NU), (nr, NU)).copy_from(&jg);
        }
        let rc = &cost.residual + &cost.jacobian * DVector::from_column_slice(offsets[k + 1].as_slice());
        let mtm = m.transpose() * &m;
        let mut hv = h.view_mut((0, 0), (width, width));
        hv += mtm * 2.0;
        let mut gv = g.rows_mut(0, width);
        gv += m.transpose() * rc * 2.0;
        for (j, gb) in blocks.iter().enumerate() {
            let lin = gb.transpose() * cost.linear;
            for c in 0..NU {
                g[j * NU + c] += lin[c];
            }
        }
    }
    for k in 0..n {
        let ic = &input_costs[k];
        let gu = ic.r * ubar[k] + ic.q;
        for a in 0..NU {
            g[k * NU + a] += gu[a];
            for b in 0..NU {
                h[(k * NU + a, k * NU + b)] += ic.r[(a, b)];
            }
        }
    }
    Condensed { h, g, offsets, gmat }
}
