//! Exact joint evolution of a system protected by a pre- and post-selected
//! spin-N device through `H = −λ S·σ + P·A`.
//!
//! Factor order is device ⊗ system throughout.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::hilbert::{hermitian_eig, tensor, Operator, StateVector, C64, ZERO};
use crate::pointer::{MeasurementRecord, PointerModel, SectorSums};
use crate::propagate::{hermitian_evolve, Propagator, Segment};
use crate::spin::{make_spin, pauli, pauli_component, qubit_up, Direction, SpinSystem};
use crate::tsv::{nearest_qubit_tsv, TwoStateVector, ORTHOGONALITY_TOL};

/// Post-selection probability, relative to the bare device overlap, below
/// which a branch is treated as dead.
pub const DEAD_BRANCH_TOL: f64 = 1e-12;

/// Smallest device pre/post overlap accepted by a setup.
pub const DEVICE_OVERLAP_FLOOR: f64 = 1e-140;

/// A protected system together with its protecting device and pointer.
#[derive(Clone, Debug)]
pub struct ProtectionSetup {
    lambda: f64,
    device: SpinSystem,
    pre_dir: Direction,
    post_dir: Direction,
    system_tsv: TwoStateVector,
    couplings: [Operator; 3],
    observable: Operator,
    meas_dir: Option<Direction>,
    pointer: PointerModel,
}

impl ProtectionSetup {
    /// Qubit target `⟨↑_β| |↑_α⟩` protected by device `⟨S_β=N| |S_α=N⟩`,
    /// measuring `σ_ξ`.
    pub fn qubit(lambda: f64, n: f64, pre_dir: Direction, post_dir: Direction, meas_dir: Direction, pointer: PointerModel) -> Result<Self> {
        let system_tsv = TwoStateVector::new(&qubit_up(&pre_dir), &qubit_up(&post_dir))?;
        Self::build(lambda, n, pre_dir, post_dir, system_tsv, pauli(), pauli_component(&meas_dir), Some(meas_dir), pointer)
    }

    /// Protection of `⟨ψ₂| |ψ₁⟩` through its model-spin operators, with the
    /// device prepared along ẑ and post-selected along χ̂.
    pub fn from_model_spin(lambda: f64, n: f64, map: &ModelSpinMap, observable: Operator, pointer: PointerModel) -> Result<Self> {
        let system_tsv = TwoStateVector::new(&map.basis.0, &map.psi2)?;
        Self::build(lambda, n, Direction::z(), map.chi, system_tsv, map.sigma_tilde.clone(), observable, None, pointer)
    }

    #[allow(clippy::too_many_arguments)]
    fn build(
        lambda: f64,
        n: f64,
        pre_dir: Direction,
        post_dir: Direction,
        system_tsv: TwoStateVector,
        couplings: [Operator; 3],
        observable: Operator,
        meas_dir: Option<Direction>,
        pointer: PointerModel,
    ) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda {lambda} must be positive")));
        }
        let device = make_spin(n)?;
        if device.twice_j() == 0 {
            return Err(Error::InvalidSpin(0.0));
        }
        let d = system_tsv.dim();
        for op in couplings.iter().chain(std::iter::once(&observable)) {
            if op.dim() != d {
                return Err(Error::DimensionMismatch { expected: d, found: op.dim() });
            }
        }
        if !observable.is_hermitian() {
            return Err(Error::NotHermitian(observable.hermiticity_defect()));
        }
        // Stretched-state overlaps fall off as ((1 + n₁·n₂)/2)^j; reject them
        // once they underflow or drown in rounding noise.
        let overlap = device.coherent(&post_dir).inner(&device.coherent(&pre_dir))?.norm();
        let exact = ((1.0 + pre_dir.dot(&post_dir)) / 2.0).max(0.0).powf(device.j());
        if exact <= DEVICE_OVERLAP_FLOOR || (overlap - exact).abs() > 1e-2 * exact {
            return Err(Error::NearOrthogonal(overlap));
        }
        Ok(Self { lambda, device, pre_dir, post_dir, system_tsv, couplings, observable, meas_dir, pointer })
    }

    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda {lambda} must be positive")));
        }
        self.lambda = lambda;
        Ok(self)
    }

    pub fn with_pointer(mut self, pointer: PointerModel) -> Self {
        self.pointer = pointer;
        self
    }

    /// Measure `σ_ξ` instead (qubit systems only).
    pub fn with_meas_dir(mut self, xi: Direction) -> Result<Self> {
        if self.system_dim() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, found: self.system_dim() });
        }
        self.observable = pauli_component(&xi);
        self.meas_dir = Some(xi);
        Ok(self)
    }

    pub fn with_observable(mut self, a: Operator) -> Result<Self> {
        if a.dim() != self.system_dim() {
            return Err(Error::DimensionMismatch { expected: self.system_dim(), found: a.dim() });
        }
        if !a.is_hermitian() {
            return Err(Error::NotHermitian(a.hermiticity_defect()));
        }
        self.observable = a;
        self.meas_dir = None;
        Ok(self)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn spin(&self) -> f64 {
        self.device.j()
    }

    pub fn device(&self) -> &SpinSystem {
        &self.device
    }

    pub fn pre_dir(&self) -> Direction {
        self.pre_dir
    }

    pub fn post_dir(&self) -> Direction {
        self.post_dir
    }

    pub fn system_tsv(&self) -> &TwoStateVector {
        &self.system_tsv
    }

    pub fn observable(&self) -> &Operator {
        &self.observable
    }

    pub fn meas_dir(&self) -> Option<Direction> {
        self.meas_dir
    }

    pub fn pointer(&self) -> &PointerModel {
        &self.pointer
    }

    pub fn duration(&self) -> f64 {
        self.pointer.duration()
    }

    pub fn system_dim(&self) -> usize {
        self.system_tsv.dim()
    }

    pub fn joint_dim(&self) -> usize {
        self.device.dim() * self.system_dim()
    }

    pub fn device_pre(&self) -> StateVector {
        self.device.coherent(&self.pre_dir)
    }

    pub fn device_post(&self) -> StateVector {
        self.device.coherent(&self.post_dir)
    }

    /// `|⟨S_β=N|S_α=N⟩|²`.
    pub fn device_overlap(&self) -> f64 {
        self.device_post().inner(&self.device_pre()).map(|z| z.norm_sqr()).unwrap_or(0.0)
    }

    /// `−λ Σ S_k ⊗ C_k`, without the measurement coupling.
    pub fn protection_hamiltonian(&self) -> Operator {
        let mut m = DMatrix::from_element(self.joint_dim(), self.joint_dim(), ZERO);
        for (s, c) in self.device.components().iter().zip(&self.couplings) {
            m += tensor(s, c).into_matrix();
        }
        Operator::new(m * C64::new(-self.lambda, 0.0)).expect("finite Hamiltonian")
    }

    /// `I ⊗ A`.
    pub fn measurement_coupling(&self) -> Operator {
        tensor(&Operator::identity(self.device.dim()), &self.observable)
    }

    fn columns_with(&self, device: &StateVector) -> DMatrix<C64> {
        let d = self.system_dim();
        let mut x = DMatrix::from_element(self.joint_dim(), d, ZERO);
        for k in 0..d {
            let col = tensor(device, &StateVector::basis(d, k).expect("index in range"));
            x.set_column(k, col.amplitudes());
        }
        x
    }

    fn check_branch(&self, prob: f64) -> Result<()> {
        let bare = self.device_overlap();
        if !(prob.is_finite() && prob >= 1e-300 && prob / bare >= DEAD_BRANCH_TOL) {
            return Err(Error::DeadBranch(prob));
        }
        Ok(())
    }
}

/// `−λ S·σ + p·(I ⊗ A)` on device ⊗ system.
pub fn build_joint_hamiltonian(setup: &ProtectionSetup, p: f64) -> Result<Operator> {
    if !p.is_finite() {
        return Err(Error::NonFinite);
    }
    setup.protection_hamiltonian().checked_add(&(p * &setup.measurement_coupling()))
}

/// `(⟨post| ⊗ I) X` for columns `X` of the joint space.
fn project_device(post: &StateVector, system_dim: usize, x: &DMatrix<C64>) -> DMatrix<C64> {
    let mut out = DMatrix::from_element(system_dim, x.ncols(), ZERO);
    for (dev, amp) in post.as_slice().iter().enumerate() {
        let a = amp.conj();
        for c in 0..x.ncols() {
            for s in 0..system_dim {
                out[(s, c)] += a * x[(dev * system_dim + s, c)];
            }
        }
    }
    out
}

/// Outcome of a full protected measurement.
#[derive(Clone, Debug)]
pub struct ProtectedRun {
    /// Pointer statistics; `complex_shift` estimates the weak value.
    pub record: MeasurementRecord,
    /// `1 − F_forward·F_backward`, averaged over pointer momenta.
    pub tsv_disturbance: f64,
    pub forward_fidelity: f64,
    pub backward_fidelity: f64,
}

struct Pass {
    shift: C64,
    prob: f64,
    p_shift: f64,
    forward: f64,
    backward: f64,
}

fn protected_pass(setup: &ProtectionSetup, steps: usize) -> Result<Pass> {
    let prop = setup.pointer.propagator(&setup.protection_hamiltonian(), &setup.measurement_coupling(), steps)?;
    let x0 = setup.columns_with(&setup.device_pre());
    let post = setup.device_post();
    let psi1 = setup.system_tsv.forward().amplitudes();
    let psi2 = setup.system_tsv.backward();
    let d = setup.system_dim();
    let mut sums = SectorSums::default();
    let (mut forward, mut backward) = (0.0, 0.0);
    for &(p, w) in setup.pointer.p_samples() {
        let out = prop.evolve(p, &x0)?;
        let m = project_device(&post, d, &out.states);
        let dm = project_device(&post, d, &out.derivatives);
        let chi: DVector<C64> = &m * psi1;
        let dchi: DVector<C64> = &dm * psi1;
        let amp = chi.norm_squared();
        sums.add(p, w, chi.as_slice(), dchi.as_slice());
        if amp == 0.0 {
            continue;
        }
        let chi_hat = StateVector::from_vector(chi.clone())?.normalized()?;
        forward += w * amp * chi_hat.fidelity(setup.system_tsv.forward())?;
        // ⟨Ψ₂|M: the target bra evolved back to the start under the same
        // device selections.
        let back = StateVector::from_vector(m.adjoint() * psi2.amplitudes())?;
        if back.norm() > 0.0 {
            backward += w * amp * back.normalized()?.fidelity(psi2)?;
        }
    }
    let (shift, prob, p_shift) = sums.finish(setup.pointer.momentum_mean())?;
    setup.check_branch(prob)?;
    Ok(Pass { shift, prob, p_shift, forward: forward / prob, backward: backward / prob })
}

/// Couple the pointer through `g(t)·P·A` for the pointer's duration while
/// the device protects the system, post-select the device, and read out.
pub fn protected_run(setup: &ProtectionSetup, steps: usize) -> Result<ProtectedRun> {
    if steps == 0 {
        return Err(Error::InvalidParameter("steps must be positive".into()));
    }
    let pass = protected_pass(setup, steps)?;
    let fine = protected_pass(setup, 2 * steps)?;
    let record = MeasurementRecord {
        q_shift_mean: pass.shift.re,
        p_shift_mean: pass.p_shift,
        outcome_distribution: vec![(setup.pointer.q_mean() + pass.shift.re, 1.0)],
        postselect_prob: pass.prob,
        complex_shift: pass.shift,
        leakage: None,
        converged: (fine.shift - pass.shift).norm() <= 1e-6,
    };
    let tsv_disturbance = 1.0 - pass.forward * pass.backward;
    Ok(ProtectedRun { record, tsv_disturbance, forward_fidelity: pass.forward, backward_fidelity: pass.backward })
}

/// Probability that an intermediate ideal measurement finds the system in
/// `flagged`, for a system prepared in `initial` under the constant joint
/// Hamiltonian with fixed pointer momentum `p`, given the final device
/// post-selection. Averaged over `time_samples` midpoints of the run.
pub fn disturbance_probability(setup: &ProtectionSetup, initial: &StateVector, flagged: &StateVector, p: f64, time_samples: usize) -> Result<f64> {
    let d = setup.system_dim();
    for s in [initial, flagged] {
        if s.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, found: s.dim() });
        }
    }
    if time_samples == 0 {
        return Err(Error::InvalidParameter("time_samples must be positive".into()));
    }
    let h = build_joint_hamiltonian(setup, p)?;
    let (values, vecs) = hermitian_eig(&h)?;
    let flagged = flagged.normalized()?;
    let start = tensor(&setup.device_pre(), &initial.normalized()?);
    let start = DMatrix::from_column_slice(start.dim(), 1, start.as_slice());
    let post_cols = setup.columns_with(&setup.device_post());
    let proj = Operator::outer(&flagged, &flagged);
    let flag_joint = tensor(&Operator::identity(setup.device.dim()), &proj);
    let total_t = setup.duration();
    let mut acc = 0.0;
    for k in 0..time_samples {
        let tm = total_t * (k as f64 + 0.5) / time_samples as f64;
        let mid = hermitian_evolve(&values, &vecs, tm, &start);
        let hit = flag_joint.matrix() * &mid;
        let miss = &mid - &hit;
        // Rows of (⟨post| ⊗ I) e^{-iH(T - t)} as columns of the adjoint.
        let back = hermitian_evolve(&values, &vecs, -(total_t - tm), &post_cols);
        let p_hit = (back.adjoint() * hit).norm_squared();
        let p_miss = (back.adjoint() * miss).norm_squared();
        let total = p_hit + p_miss;
        setup.check_branch(total)?;
        acc += p_hit / total;
    }
    Ok(acc / time_samples as f64)
}

/// Fidelity `⟨S_α=N|ρ_device(t)|S_α=N⟩` of the unconditioned device state
/// under the constant joint Hamiltonian with momentum `p`.
pub fn device_fidelity(setup: &ProtectionSetup, p: f64, times: &[f64]) -> Result<Vec<f64>> {
    let h = build_joint_hamiltonian(setup, p)?;
    let (values, vecs) = hermitian_eig(&h)?;
    let pre = setup.device_pre();
    let start = tensor(&pre, setup.system_tsv.forward());
    let start = DMatrix::from_column_slice(start.dim(), 1, start.as_slice());
    let probe = setup.columns_with(&pre);
    times
        .iter()
        .map(|&t| {
            let psi = hermitian_evolve(&values, &vecs, t, &start);
            Ok((probe.adjoint() * psi).norm_squared())
        })
        .collect()
}

/// System state conditioned on post-selecting the device at time `t`,
/// under the constant joint Hamiltonian with momentum `p`.
pub fn conditional_system_state(setup: &ProtectionSetup, p: f64, t: f64) -> Result<StateVector> {
    let h = build_joint_hamiltonian(setup, p)?;
    let (values, vecs) = hermitian_eig(&h)?;
    let start = tensor(&setup.device_pre(), setup.system_tsv.forward());
    let start = DMatrix::from_column_slice(start.dim(), 1, start.as_slice());
    let psi = hermitian_evolve(&values, &vecs, t, &start);
    let chi = project_device(&setup.device_post(), setup.system_dim(), &psi);
    StateVector::from_vector(chi.column(0).into_owned())?.normalized()
}

/// The model-spin description of a two-state vector `⟨ψ₂| |ψ₁⟩`.
#[derive(Clone, Debug)]
pub struct ModelSpinMap {
    /// `(|↑̃_z⟩, |↓̃_z⟩) = (|ψ₁⟩, |ψ⊥⟩)`.
    pub basis: (StateVector, StateVector),
    pub a: C64,
    pub b: C64,
    pub chi: Direction,
    pub sigma_tilde: [Operator; 3],
    psi2: StateVector,
}

/// Build model-spin operators on the span of `ψ₁` and `ψ₂`, so that
/// `⟨ψ₂| |ψ₁⟩` reads as the qubit pair `⟨↑̃_χ| |↑̃_z⟩`.
pub fn model_spin(psi1: &StateVector, psi2: &StateVector) -> Result<ModelSpinMap> {
    if psi1.dim() != psi2.dim() {
        return Err(Error::DimensionMismatch { expected: psi1.dim(), found: psi2.dim() });
    }
    if psi1.dim() < 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: psi1.dim() });
    }
    let up = psi1.normalized()?;
    let psi2 = psi2.normalized()?;
    let a = up.inner(&psi2)?;
    if a.norm() <= ORTHOGONALITY_TOL {
        return Err(Error::NearOrthogonal(a.norm()));
    }
    let residual = psi2.amplitudes() - up.amplitudes() * a;
    let down = if residual.norm() > 1e-12 {
        StateVector::from_vector(residual)?.normalized()?
    } else {
        any_orthogonal(&up)?
    };
    let b = down.inner(&psi2)?;
    let ab = a.conj() * b;
    let z = a.norm_sqr() - b.norm_sqr();
    let chi = Direction::new(2.0 * ab.re, 2.0 * ab.im, z)?;
    let raise = Operator::outer(&up, &down);
    let lower = raise.adjoint();
    let sigma_tilde = [
        &raise + &lower,
        &(C64::new(0.0, -1.0) * &raise) + &(C64::new(0.0, 1.0) * &lower),
        &Operator::outer(&up, &up) - &Operator::outer(&down, &down),
    ];
    Ok(ModelSpinMap { basis: (up, down), a, b, chi, sigma_tilde, psi2 })
}

fn any_orthogonal(v: &StateVector) -> Result<StateVector> {
    let k = v.as_slice().iter().enumerate().min_by(|x, y| x.1.norm().total_cmp(&y.1.norm())).map(|x| x.0).unwrap_or(0);
    let e = StateVector::basis(v.dim(), k)?;
    let overlap = v.inner(&e)?;
    StateVector::from_vector(e.amplitudes() - v.amplitudes() * overlap)?.normalized()
}

/// Three protected measurements of σx, σy, σz in sequence on one system.
#[derive(Clone, Debug)]
pub struct Tomography {
    /// Complex pointer readings in the order x, y, z.
    pub readings: [C64; 3],
    pub reconstructed: TwoStateVector,
    /// `|w·w − 1|` of the readings.
    pub residual: f64,
    /// Forward and backward fidelities against the target.
    pub fidelities: (f64, f64),
    pub postselect_prob: f64,
}

/// Measure σx, σy and σz one after another, each over a third of the run
/// with its own pointer, and rebuild the qubit two-state vector from the
/// three readings. `steps` is the step count of each third.
pub fn sequential_tomography(setup: &ProtectionSetup, steps: usize) -> Result<Tomography> {
    if setup.system_dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: setup.system_dim() });
    }
    if steps == 0 {
        return Err(Error::InvalidParameter("steps must be positive".into()));
    }
    let third = setup.pointer.clone().with_duration(setup.duration() / 3.0)?;
    let h0 = setup.protection_hamiltonian();
    let dev_id = Operator::identity(setup.device.dim());
    let couplings: Vec<Operator> = pauli().iter().map(|s| tensor(&dev_id, s)).collect();
    let prop_x = third.propagator(&h0, &couplings[0], steps)?;
    let prop_y = third.propagator(&h0, &couplings[1], steps)?;
    let prop_z = third.propagator(&h0, &couplings[2], steps)?;
    // U_z† evolves under −H along the reversed schedule.
    let reversed: Vec<Segment> = prop_z.segments().iter().rev().copied().collect();
    let back_z = Propagator::new(&(-&h0), &(-&couplings[2]), reversed)?;

    let samples = third.p_samples();
    let n = samples.len();
    let dim = setup.joint_dim();
    let start = tensor(&setup.device_pre(), setup.system_tsv.forward());
    let start = DMatrix::from_column_slice(dim, 1, start.as_slice());

    let mut fx = DMatrix::from_element(dim, 2 * n, ZERO);
    for (i, &(px, _)) in samples.iter().enumerate() {
        let out = prop_x.evolve(px, &start)?;
        fx.set_column(i, &out.states.column(0));
        fx.set_column(n + i, &out.derivatives.column(0));
    }
    let post_cols = setup.columns_with(&setup.device_post());
    let mut rows_z = Vec::with_capacity(n);
    for &(pz, _) in samples {
        let out = back_z.evolve(pz, &post_cols)?;
        rows_z.push((out.states.adjoint(), out.derivatives.adjoint()));
    }

    let mut sums = [SectorSums::default(), SectorSums::default(), SectorSums::default()];
    for &(py, wy) in samples {
        let mid = prop_y.evolve(py, &fx)?;
        for (i, &(px, wx)) in samples.iter().enumerate() {
            let g = mid.states.column(i);
            let dgy = mid.derivatives.column(i);
            let dgx = mid.states.column(n + i);
            for (k, &(pz, wz)) in samples.iter().enumerate() {
                let (b, db) = &rows_z[k];
                let chi = b * g;
                let w = wx * wy * wz;
                sums[0].add(px, w, chi.as_slice(), (b * dgx).as_slice());
                sums[1].add(py, w, chi.as_slice(), (b * dgy).as_slice());
                sums[2].add(pz, w, chi.as_slice(), (db * g).as_slice());
            }
        }
    }
    let mean = third.momentum_mean();
    let mut readings = [ZERO; 3];
    let mut prob = 0.0;
    for (r, s) in readings.iter_mut().zip(&sums) {
        let (shift, pr, _) = s.finish(mean)?;
        *r = shift;
        prob = pr;
    }
    setup.check_branch(prob)?;
    let (reconstructed, residual) = nearest_qubit_tsv(readings)?;
    let fidelities = reconstructed.fidelities(&setup.system_tsv)?;
    Ok(Tomography { readings, reconstructed, residual, fidelities, postselect_prob: prob })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::testutil::*;
    use crate::spin::qubit_down;
    use crate::tsv::weak_value;

    fn pointer(p_max: f64, samples: usize) -> PointerModel {
        PointerModel::with_p_max(p_max, samples).unwrap()
    }

    fn xy_setup(lambda: f64, n: f64, xi: Direction, samples: usize) -> ProtectionSetup {
        ProtectionSetup::qubit(lambda, n, Direction::x(), Direction::y(), xi, pointer(1.0, samples)).unwrap()
    }

    #[test]
    fn spin_half_coupling_spectrum() {
        let setup = xy_setup(1.5, 0.5, Direction::x(), 3);
        let h = build_joint_hamiltonian(&setup, 0.0).unwrap();
        // Independent construction: −(λ/2) Σ σ_k ⊗ σ_k.
        let mut oracle = Operator::zeros(4);
        for s in pauli() {
            oracle = &oracle + &tensor(&s, &s);
        }
        let oracle = -0.75 * &oracle;
        assert!(h.max_abs_diff(&oracle) < 1e-14);
        let (values, _) = hermitian_eig(&h).unwrap();
        let want = [-0.75, -0.75, -0.75, 2.25];
        for (v, w) in values.iter().zip(want) {
            assert!((v - w).abs() < 1e-12, "{values:?}");
        }
    }

    #[test]
    fn aligned_state_energy_and_hermiticity() {
        for n in [1.0, 4.5, 10.0] {
            let setup = xy_setup(2.0, n, Direction::z(), 3);
            let h = build_joint_hamiltonian(&setup, 0.3).unwrap();
            assert!(h.is_hermitian());
            let h0 = build_joint_hamiltonian(&setup, 0.0).unwrap();
            let psi = tensor(&setup.device_pre(), &qubit_up(&Direction::x()));
            assert!((h0.expectation(&psi).unwrap() - C64::new(-2.0 * n, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn protected_readings_follow_weak_values() {
        let setup = xy_setup(2.0, 10.0, Direction::x(), 9);
        let run = protected_run(&setup, 200).unwrap();
        assert!((run.record.q_shift_mean - 1.0).abs() < 0.1, "{:?}", run.record);
        assert!(run.record.converged);
        let overlap = setup.device_overlap();
        assert!((run.record.postselect_prob / overlap - 1.0).abs() < 0.2);

        let z = protected_run(&setup.clone().with_meas_dir(Direction::z()).unwrap(), 200).unwrap();
        assert!(z.record.q_shift_mean.abs() < 0.1);
        assert!(z.record.p_shift_mean > 0.0);
        assert!((z.record.complex_shift.im - 1.0).abs() < 0.1);
    }

    #[test]
    fn larger_coupling_protects_better() {
        let up = qubit_up(&Direction::x());
        let down = qubit_down(&Direction::x());
        for xi in [Direction::y(), Direction::z()] {
            let base = xy_setup(2.0, 10.0, xi, 3);
            let strong = base.clone().with_lambda(50.0).unwrap();
            let weak_leak = disturbance_probability(&base, &up, &down, 0.5, 64).unwrap();
            let strong_leak = disturbance_probability(&strong, &up, &down, 0.5, 64).unwrap();
            assert!(strong_leak < weak_leak, "{strong_leak} {weak_leak}");
        }
        // The reading bias shrinks too.
        let base = xy_setup(2.0, 10.0, Direction::z(), 9);
        let weak = protected_run(&base, 200).unwrap().record.q_shift_mean.abs();
        let strong = protected_run(&base.clone().with_lambda(50.0).unwrap(), 200).unwrap().record.q_shift_mean.abs();
        assert!(strong < weak, "{strong} {weak}");
    }

    #[test]
    fn protected_eigenstate_does_not_leak() {
        let setup = xy_setup(1.0, 10.0, Direction::x(), 3);
        let up = qubit_up(&Direction::x());
        let prob = disturbance_probability(&setup, &up, &qubit_down(&Direction::x()), 0.0, 16).unwrap();
        assert!(prob < 1e-6, "{prob}");
    }

    #[test]
    fn disturbance_falls_with_device_size() {
        let up_y = qubit_up(&Direction::y());
        let down_y = qubit_down(&Direction::y());
        let probs: Vec<f64> = [4.0, 8.0, 16.0]
            .iter()
            .map(|&n| disturbance_probability(&xy_setup(1.0, n, Direction::x(), 3), &down_y, &up_y, 0.0, 64).unwrap())
            .collect();
        assert!(probs.windows(2).all(|w| w[1] < w[0]), "{probs:?}");
        let slope = (probs[2] / probs[0]).ln() / 4f64.ln();
        assert!((-2.6..=-1.4).contains(&slope), "{slope}");
    }

    #[test]
    fn momentum_corrections_stay_within_quartic_envelope() {
        let setup = xy_setup(1.0, 12.0, Direction::x(), 3);
        let up_y = qubit_up(&Direction::y());
        let down_y = qubit_down(&Direction::y());
        let at = |p: f64| disturbance_probability(&setup, &down_y, &up_y, p, 64).unwrap();
        let base = at(0.0);
        let excess: Vec<f64> = [0.1, 0.2, 0.4].iter().map(|&p| (at(p) - base).abs()).collect();
        let order = (excess[2] / excess[0]).ln() / 4f64.ln();
        assert!(order <= 4.2, "{excess:?}");
    }

    #[test]
    fn dead_branch_is_reported() {
        let setup = ProtectionSetup::qubit(1.0, 20.0, Direction::x(), Direction::new(-1.0, 1e-3, 0.0).unwrap(), Direction::x(), pointer(1.0, 3));
        assert!(matches!(setup, Err(Error::NearOrthogonal(_))));
    }

    #[test]
    fn large_devices_keep_tiny_overlaps() {
        let setup = xy_setup(2.0, 40.0, Direction::x(), 3);
        assert!((setup.device_overlap() / 2f64.powi(-80) - 1.0).abs() < 1e-2);
        let anti = ProtectionSetup::qubit(1.0, 3.0, Direction::x(), Direction::x().flipped(), Direction::x(), pointer(1.0, 3));
        assert!(matches!(anti, Err(Error::NearOrthogonal(_))));
    }

    #[test]
    fn model_spin_of_identical_states() {
        let mut r = rng(41);
        let psi = random_state(&mut r, 3);
        let map = model_spin(&psi, &psi).unwrap();
        assert!((map.a - 1.0).norm() < 1e-12 && map.b.norm() < 1e-12);
        assert!((map.chi.components()[2] - 1.0).abs() < 1e-12);
        assert!(map.basis.0.inner(&map.basis.1).unwrap().norm() < 1e-12);
    }

    #[test]
    fn model_spin_invariants() {
        let mut r = rng(42);
        for _ in 0..20 {
            let p1 = random_state(&mut r, 4);
            let p2 = random_state(&mut r, 4);
            let map = model_spin(&p1, &p2).unwrap();
            assert!((map.a.norm_sqr() + map.b.norm_sqr() - 1.0).abs() < 1e-10);
            assert!(map.basis.0.inner(&map.basis.1).unwrap().norm() < 1e-12);
            let tsv = TwoStateVector::new(&p1, &p2).unwrap();
            // ⟨ψ₂| |ψ₁⟩ is the qubit pair ⟨↑̃_χ| |↑̃_z⟩: its σ̃ weak values are the
            // weak values of σ for ⟨↑_χ| |↑_z⟩.
            let qubit = TwoStateVector::new(&qubit_up(&Direction::z()), &qubit_up(&map.chi)).unwrap();
            for (st, s) in map.sigma_tilde.iter().zip(pauli()) {
                let got = weak_value(st, &tsv).unwrap().value;
                let want = weak_value(&s, &qubit).unwrap().value;
                assert!((got - want).norm() < 1e-9);
            }
        }
        let e0 = StateVector::basis(2, 0).unwrap();
        assert!(matches!(model_spin(&e0, &StateVector::basis(2, 1).unwrap()), Err(Error::NearOrthogonal(_))));
    }

    #[test]
    fn model_spin_reproduces_direct_protection() {
        for xi in [Direction::x(), Direction::y(), Direction::z()] {
            let direct = xy_setup(2.0, 5.0, xi, 5);
            let map = model_spin(&qubit_up(&Direction::x()), &qubit_up(&Direction::y())).unwrap();
            let via = ProtectionSetup::from_model_spin(2.0, 5.0, &map, pauli_component(&xi), pointer(1.0, 5)).unwrap();
            let a = protected_run(&direct, 100).unwrap();
            let b = protected_run(&via, 100).unwrap();
            assert!((a.record.complex_shift - b.record.complex_shift).norm() < 1e-6);
            assert!((a.record.postselect_prob - b.record.postselect_prob).abs() < 1e-6);
            assert!((a.tsv_disturbance - b.tsv_disturbance).abs() < 1e-6);
        }
    }

    #[test]
    fn embedded_three_level_system() {
        let mut r = rng(43);
        let p1 = random_state(&mut r, 3);
        let p2 = StateVector::from_vector(p1.amplitudes() + random_state(&mut r, 3).amplitudes() * C64::new(0.6, 0.0))
            .unwrap()
            .normalized()
            .unwrap();
        let a = random_hermitian(&mut r, 3);
        let map = model_spin(&p1, &p2).unwrap();
        let want = weak_value(&a, &TwoStateVector::new(&p1, &p2).unwrap()).unwrap().value;
        let errs: Vec<f64> = [8.0, 24.0]
            .iter()
            .map(|&n| {
                let setup = ProtectionSetup::from_model_spin(2.0, n, &map, a.clone(), pointer(0.5, 5)).unwrap();
                (protected_run(&setup, 200).unwrap().record.complex_shift - want).norm()
            })
            .collect();
        assert!(errs[1] < errs[0] && errs[1] < 5.0 * want.norm().max(1.0) / 24.0, "{errs:?} {want}");
    }

    #[test]
    fn conditional_dynamics_follow_effective_hamiltonian() {
        use crate::nonhermitian::{add_measurement_term, effective_protector, evolve_nonhermitian, stretched_device_weak_value};
        let p = 0.4;
        for n in [16.0, 24.0] {
            let setup = xy_setup(2.0, n, Direction::z(), 3);
            let h_eff = add_measurement_term(&effective_protector(2.0, stretched_device_weak_value(n)).unwrap(), p, 1.0, &Direction::z()).unwrap();
            for t in [0.1, 0.35, 0.7, 1.0] {
                let exact = conditional_system_state(&setup, p, t).unwrap();
                let eff = evolve_nonhermitian(&h_eff, &qubit_up(&Direction::x()), t).unwrap().state;
                let trace_distance = (1.0 - exact.fidelity(&eff).unwrap()).max(0.0).sqrt();
                assert!(trace_distance < 5.0 / n, "N={n} t={t} {trace_distance}");
            }
        }
    }

    #[test]
    fn device_state_stays_put() {
        let times: Vec<f64> = (1..=8).map(|k| k as f64 / 8.0).collect();
        let mut scaled = Vec::new();
        for n in [8.0, 16.0, 32.0] {
            let f = device_fidelity(&xy_setup(2.0, n, Direction::z(), 3), 0.5, &times).unwrap();
            let worst = f.iter().copied().fold(1.0, f64::min);
            scaled.push((1.0 - worst) * n);
        }
        let c = scaled.iter().copied().fold(0.0, f64::max);
        for (k, n) in [8.0, 16.0, 32.0].iter().enumerate() {
            assert!(scaled[k] / n <= c / n + 1e-15);
        }
        assert!(scaled[2] <= scaled[0] * 1.5, "{scaled:?}");
    }

    #[test]
    fn tomography_recovers_identical_pair() {
        let up = Direction::new(1.0, 0.5, -0.3).unwrap();
        let setup = ProtectionSetup::qubit(5.0, 10.0, up, up, Direction::x(), pointer(0.5, 5)).unwrap();
        let tomo = sequential_tomography(&setup, 60).unwrap();
        assert!(tomo.fidelities.0 > 0.999 && tomo.fidelities.1 > 0.999, "{tomo:?}");
    }

    #[test]
    fn tomography_improves_with_device_size() {
        let errs: Vec<f64> = [6.0, 24.0]
            .iter()
            .map(|&n| {
                let setup = ProtectionSetup::qubit(5.0, n, Direction::x(), Direction::y(), Direction::x(), pointer(0.5, 5)).unwrap();
                let t = sequential_tomography(&setup, 60).unwrap();
                2.0 - t.fidelities.0 - t.fidelities.1
            })
            .collect();
        assert!(errs[1] < errs[0], "{errs:?}");
    }
}
