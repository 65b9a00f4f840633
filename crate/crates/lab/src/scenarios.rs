//! Scenario runners. Each one validates its whole parameter table before
//! doing any numerical work.

use std::fmt::Display;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tsv_core::hilbert::{general_eig, hermitian_eig, Operator, StateVector, C64};
use tsv_core::kaon::{kaon_overlap_check, long_branch_index, survival_postselected_run, KaonParams};
use tsv_core::nonhermitian::{add_measurement_term, effective_protector, BiorthogonalSystem};
use tsv_core::pointer::{adiabatic_measure_single, PointerModel, Schedule};
use tsv_core::protection::{disturbance_probability, protected_run, sequential_tomography, ProtectionSetup};
use tsv_core::spin::{make_spin, pauli, pauli_component, qubit_down, qubit_up, twice_spin, Direction};
use tsv_core::tsv::{pauli_weak_values, weak_value, weak_value_vector, TwoStateVector};

use crate::config::*;
use crate::error::{Context, LabError, Result};
use crate::table::{Cell, Report, Table};

/// Parameter checks that point back into the config file.
pub(crate) struct Check<'a> {
    map: &'a SourceMap,
}

impl<'a> Check<'a> {
    pub fn new(map: &'a SourceMap) -> Self {
        Self { map }
    }

    fn fail(&self, key: &str, msg: impl Display) -> LabError {
        LabError::Config { line: self.map.line_of(key), message: format!("parameters.{key}: {msg}") }
    }

    fn positive(&self, key: &str, v: f64) -> Result<f64> {
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(self.fail(key, format!("{v} must be positive and finite")))
        }
    }

    fn finite(&self, key: &str, v: f64) -> Result<f64> {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.fail(key, format!("{v} must be finite")))
        }
    }

    fn count(&self, key: &str, n: usize) -> Result<usize> {
        if n > 0 {
            Ok(n)
        } else {
            Err(self.fail(key, "must be at least 1"))
        }
    }

    fn ladder<T>(&self, key: &str, v: &'a [T]) -> Result<&'a [T]> {
        if v.is_empty() {
            Err(self.fail(key, "ladder must not be empty"))
        } else {
            Ok(v)
        }
    }

    fn direction(&self, key: &str, v: Vec3) -> Result<Direction> {
        Direction::new(v[0], v[1], v[2]).map_err(|e| self.fail(key, e))
    }

    fn spin(&self, key: &str, j: f64) -> Result<f64> {
        twice_spin(j).map(|_| j).map_err(|e| self.fail(key, e))
    }

    fn ramp(&self, key: &str, r: f64) -> Result<f64> {
        if (0.0..=0.5).contains(&r) {
            Ok(r)
        } else {
            Err(self.fail(key, format!("{r} must lie in [0, 0.5]")))
        }
    }

    fn pointer(&self, p_max: f64, samples: usize, duration: f64, ramp_fraction: f64) -> Result<PointerModel> {
        self.positive("p_max", p_max)?;
        self.count("samples", samples)?;
        self.positive("duration", duration)?;
        self.ramp("ramp_fraction", ramp_fraction)?;
        PointerModel::with_p_max(p_max, samples)
            .and_then(|p| p.with_duration(duration))
            .and_then(|p| p.with_schedule(Schedule::FlatWithRamps { ramp_fraction }))
            .map_err(|e| self.fail("p_max", e))
    }
}

fn dir_cells(d: &Direction) -> [Cell; 3] {
    d.components().map(Cell::Float)
}

fn bloch(psi: &StateVector) -> tsv_core::Result<[f64; 3]> {
    let s = pauli();
    Ok([s[0].expectation(psi)?.re, s[1].expectation(psi)?.re, s[2].expectation(psi)?.re])
}

pub(crate) fn weak_value_scenario(p: &WeakValueParams, c: &Check) -> Result<Report> {
    const S: Scenario = Scenario::WeakValue;
    let j = c.spin("spin", p.spin)?;
    let pre = c.direction("pre", p.pre)?;
    let post = c.direction("post", p.post)?;
    let extra = p.direction.map(|d| c.direction("direction", d)).transpose()?;

    let sys = make_spin(j).context(S, || "spin".into())?;
    let tsv = TwoStateVector::new(&sys.coherent(&pre), &sys.coherent(&post)).context(S, || "pre/post selection".into())?;
    let qubit = sys.dim() == 2;
    let w = if qubit { pauli_weak_values(&tsv) } else { weak_value_vector(&sys, &tsv) }.context(S, || "weak values".into())?;
    let mut cols = vec!["spin", "operator", "w_x", "w_y", "w_z"];
    let mut row: Vec<Cell> = vec![j.into(), if qubit { "sigma" } else { "S" }.into(), w[0].into(), w[1].into(), w[2].into()];
    if let Some(n) = extra {
        let op = if qubit { pauli_component(&n) } else { sys.component(&n) };
        let wn = weak_value(&op, &tsv).context(S, || "directional weak value".into())?.value;
        cols.push("w_n");
        row.push(wn.into());
    }
    cols.push("overlap_abs");
    row.push(tsv.overlap().norm().into());
    let mut table = Table::new(&cols);
    table.push(row);
    Ok(Report { table, diagnostics: Vec::new() })
}

pub(crate) fn protect_scenario(p: &ProtectParams, c: &Check) -> Result<Report> {
    const S: Scenario = Scenario::Protect;
    let lambda = c.positive("lambda", p.lambda)?;
    let spins = c.ladder("spins", &p.spins)?;
    for &n in spins {
        c.spin("spins", n)?;
    }
    let pre = c.direction("pre", p.pre)?;
    let post = c.direction("post", p.post)?;
    let dirs = c
        .ladder("meas_dirs", &p.meas_dirs)?
        .iter()
        .map(|&d| c.direction("meas_dirs", d))
        .collect::<Result<Vec<_>>>()?;
    let ptr = c.pointer(p.p_max, p.samples, p.duration, p.ramp_fraction)?;
    let steps = c.count("steps", p.steps)?;

    let mut table = Table::new(&[
        "spin", "meas_x", "meas_y", "meas_z", "reading", "weak_value", "error_re", "p_shift", "postselect_prob",
        "tsv_disturbance", "forward_fidelity", "backward_fidelity", "converged",
    ]);
    let mut worst: f64 = 0.0;
    for &n in spins {
        for xi in &dirs {
            let ctx = || format!("spin {n}, meas_dir {:?}", xi.components());
            let setup = ProtectionSetup::qubit(lambda, n, pre, post, *xi, ptr.clone()).context(S, ctx)?;
            let run = protected_run(&setup, steps).context(S, ctx)?;
            let w = weak_value(setup.observable(), setup.system_tsv()).context(S, ctx)?.value;
            let err = (run.record.complex_shift.re - w.re).abs();
            worst = worst.max(err);
            let [mx, my, mz] = dir_cells(xi);
            table.push(vec![
                n.into(), mx, my, mz,
                run.record.complex_shift.into(),
                w.into(),
                err.into(),
                run.record.p_shift_mean.into(),
                run.record.postselect_prob.into(),
                run.tsv_disturbance.into(),
                run.forward_fidelity.into(),
                run.backward_fidelity.into(),
                run.record.converged.into(),
            ]);
        }
    }
    let mut report = Report { table, diagnostics: Vec::new() };
    report.diagnostic("max_error_re", worst);
    Ok(report)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    if x.len() < 2 || y.iter().any(|&v| v.is_nan() || v <= 0.0) {
        return f64::NAN;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

pub(crate) fn disturbance_scenario(p: &DisturbanceParams, c: &Check) -> Result<Report> {
    const S: Scenario = Scenario::DisturbanceScan;
    let lambda = c.positive("lambda", p.lambda)?;
    let spins = c.ladder("spins", &p.spins)?;
    for &n in spins {
        c.spin("spins", n)?;
    }
    let pre = c.direction("pre", p.pre)?;
    let post = c.direction("post", p.post)?;
    let xi = c.direction("meas_dir", p.meas_dir)?;
    let initial = qubit_up(&c.direction("initial", p.initial)?);
    let flagged = qubit_up(&c.direction("flagged", p.flagged)?);
    let pv = c.finite("p", p.p)?;
    let ptr = c.pointer(p.p_max, 1, p.duration, 0.0)?;
    let samples = c.count("time_samples", p.time_samples)?;

    let probs = spins
        .iter()
        .map(|&n| {
            let ctx = || format!("spin {n}");
            let setup = ProtectionSetup::qubit(lambda, n, pre, post, xi, ptr.clone()).context(S, ctx)?;
            disturbance_probability(&setup, &initial, &flagged, pv, samples).context(S, ctx)
        })
        .collect::<Result<Vec<f64>>>()?;
    let slope = log_log_slope(spins, &probs);
    let mut table = Table::new(&["spin", "probability", "scaled_by_n2", "slope"]);
    for (&n, &prob) in spins.iter().zip(&probs) {
        table.push(vec![n.into(), prob.into(), (prob * n * n).into(), slope.into()]);
    }
    let mut report = Report { table, diagnostics: Vec::new() };
    report.diagnostic("slope", slope);
    report.diagnostic("monotone_decreasing", probs.windows(2).all(|w| w[1] < w[0]));
    Ok(report)
}

pub(crate) fn tomography_scenario(p: &TomographyParams, c: &Check) -> Result<Report> {
    const S: Scenario = Scenario::Tomography;
    let lambda = c.positive("lambda", p.lambda)?;
    let n = c.spin("spin", p.spin)?;
    let pre = c.direction("pre", p.pre)?;
    let post = c.direction("post", p.post)?;
    let ptr = c.pointer(p.p_max, p.samples, p.duration, 0.1)?;
    let steps = c.count("steps", p.steps)?;

    let ctx = || format!("spin {n}");
    let setup = ProtectionSetup::qubit(lambda, n, pre, post, Direction::x(), ptr).context(S, ctx)?;
    let tomo = sequential_tomography(&setup, steps).context(S, ctx)?;
    let w = pauli_weak_values(setup.system_tsv()).context(S, ctx)?;
    let fwd = bloch(tomo.reconstructed.forward()).context(S, ctx)?;
    let bwd = bloch(tomo.reconstructed.backward()).context(S, ctx)?;
    let mut table = Table::new(&[
        "reading_x", "reading_y", "reading_z", "weak_x", "weak_y", "weak_z", "forward_x", "forward_y", "forward_z",
        "backward_x", "backward_y", "backward_z", "forward_fidelity", "backward_fidelity", "residual", "postselect_prob",
    ]);
    let mut row: Vec<Cell> = tomo.readings.iter().chain(&w).map(|&z| z.into()).collect();
    row.extend(fwd.iter().chain(&bwd).map(|&v| Cell::Float(v)));
    row.extend([tomo.fidelities.0.into(), tomo.fidelities.1.into(), tomo.residual.into(), tomo.postselect_prob.into()]);
    table.push(row);
    Ok(Report { table, diagnostics: Vec::new() })
}

pub(crate) fn adiabatic_scenario(p: &AdiabaticParams, c: &Check) -> Result<Report> {
    const S: Scenario = Scenario::AdiabaticSingle;
    let field = c.direction("field", p.field)?;
    let splitting = c.positive("splitting", p.splitting)?;
    let a = pauli_component(&c.direction("observable", p.observable)?);
    let durations = c.ladder("durations", &p.durations)?;
    for &t in durations {
        c.positive("durations", t)?;
    }
    let base = c.pointer(p.p_max, p.samples, 1.0, p.ramp_fraction)?;
    let steps = c.count("steps", p.steps)?;

    let h0 = (splitting / 2.0) * &pauli_component(&field);
    let psi0 = match p.level {
        Level::Ground => qubit_down(&field),
        Level::Excited => qubit_up(&field),
    };
    let expected = a.expectation(&psi0).context(S, || "expectation".into())?.re;
    let mut table = Table::new(&["duration", "q_shift", "expected", "error", "p_shift", "leakage", "converged"]);
    for &t in durations {
        let ctx = || format!("duration {t}");
        let ptr = base.clone().with_duration(t).context(S, ctx)?;
        let rec = adiabatic_measure_single(&a, &h0, &psi0, &ptr, steps).context(S, ctx)?;
        table.push(vec![
            t.into(),
            rec.q_shift_mean.into(),
            expected.into(),
            (rec.q_shift_mean - expected).abs().into(),
            rec.p_shift_mean.into(),
            rec.leakage.map_or(Cell::Empty, Cell::Float),
            rec.converged.into(),
        ]);
    }
    Ok(Report { table, diagnostics: Vec::new() })
}

/// Largest `|lhs − predicted|` of the kaon overlap relation over random
/// parameter draws.
pub fn kaon_overlap_sweep(seed: u64, draws: usize) -> tsv_core::Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..draws {
        let eps = C64::from_polar(rng.random_range(0.0..0.099), rng.random_range(0.0..std::f64::consts::TAU));
        let gamma_l = rng.random_range(1e-4..0.5);
        let params = KaonParams {
            m_l: rng.random_range(-1.0..1.0),
            m_s: rng.random_range(-1.0..1.0),
            gamma_l,
            gamma_s: gamma_l + rng.random_range(0.01..2.0),
            epsilon: eps,
        };
        let check = kaon_overlap_check(&params)?;
        worst = worst.max((check.forward_backward_short - check.predicted).abs()).max((check.forward_backward_long - check.predicted).abs());
    }
    Ok(worst)
}

pub(crate) fn kaon_scenario(p: &KaonConfig, c: &Check) -> Result<Report> {
    const S: Scenario = Scenario::Kaon;
    let params = KaonParams {
        m_l: p.m_l,
        m_s: p.m_s,
        gamma_l: p.gamma_l,
        gamma_s: p.gamma_s,
        epsilon: C64::new(p.epsilon[0], p.epsilon[1]),
    };
    if let Err(e) = params.validate() {
        let key = if p.epsilon[0].hypot(p.epsilon[1]) >= 0.1 { "epsilon" } else { "gamma_l" };
        return Err(c.fail(key, e));
    }
    let amps: Vec<C64> = p.initial.iter().map(|z| C64::new(z[0], z[1])).collect();
    let psi0 = StateVector::new(amps).and_then(|s| s.normalized()).map_err(|e| c.fail("initial", e))?;
    let times = c.ladder("times", &p.times)?;
    for &t in times {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(c.fail("times", format!("{t} must be nonnegative and finite")));
        }
    }

    let check = kaon_overlap_check(&params).context(S, || "overlap relation".into())?;
    let long = long_branch_index(&params).context(S, || "eigen-decomposition".into())?;
    let long_state = params.long_state();
    let mut table = Table::new(&["time", "norm_factor", "long_probability", "short_probability", "k0", "k0bar", "long_fidelity"]);
    for &t in times {
        let ctx = || format!("time {t}");
        let run = survival_postselected_run(&params, &psi0, t).context(S, ctx)?;
        let probs = run.branch_probabilities();
        let amps = run.state.as_slice();
        table.push(vec![
            t.into(),
            run.norm_factor.into(),
            probs[long].into(),
            probs[1 - long].into(),
            amps[0].into(),
            amps[1].into(),
            run.state.fidelity(&long_state).context(S, ctx)?.into(),
        ]);
    }
    let mut report = Report { table, diagnostics: Vec::new() };
    report.diagnostic("mixing", check.mixing);
    report.diagnostic("forward_backward", check.forward_backward_short);
    report.diagnostic("predicted", check.predicted);
    report.diagnostic("unit_overlap", check.unit_overlap_short);
    report.diagnostic("seed", Cell::Int(p.seed as i64));
    report.diagnostic("draws", p.draws);
    if p.draws > 0 {
        let worst = kaon_overlap_sweep(p.seed, p.draws).context(S, || "overlap sweep".into())?;
        report.diagnostic("sweep_max_error", worst);
    }
    Ok(report)
}

pub(crate) fn spectrum_scenario(p: &SpectrumParams, c: &Check) -> Result<Report> {
    const S: Scenario = Scenario::Spectrum;
    let lambda = c.positive("lambda", p.lambda)?;
    let spins = c.ladder("spins", &p.spins)?;
    for &n in spins {
        c.spin("spins", n)?;
    }
    let pre = c.direction("pre", p.pre)?;
    let post = c.direction("post", p.post)?;
    let p_over_t = c.finite("p_over_t", p.p_over_t)?;
    let xi = c.direction("meas_dir", p.meas_dir)?;
    let ptr = PointerModel::with_p_max(1.0, 1).context(S, || "pointer".into())?;

    let mut table = Table::new(&["spin", "hamiltonian", "index", "eigenvalue"]);
    for &n in spins {
        let ctx = || format!("spin {n}");
        let setup = ProtectionSetup::qubit(lambda, n, pre, post, xi, ptr.clone()).context(S, ctx)?;
        let (values, _) = hermitian_eig(&setup.protection_hamiltonian()).context(S, ctx)?;
        for (k, &e) in values.iter().enumerate() {
            table.push(vec![n.into(), "joint".into(), k.into(), C64::new(e, 0.0).into()]);
        }
        if !p.effective {
            continue;
        }
        let device = make_spin(n).context(S, ctx)?;
        let dtsv = TwoStateVector::new(&setup.device_pre(), &setup.device_post()).context(S, ctx)?;
        let sw = weak_value_vector(&device, &dtsv).context(S, ctx)?;
        let h_eff = effective_protector(lambda, sw).context(S, ctx)?;
        let perturbed = add_measurement_term(&h_eff, p_over_t, 1.0, &xi).context(S, ctx)?;
        for (k, t) in general_eig(&perturbed).context(S, ctx)?.iter().enumerate() {
            table.push(vec![n.into(), "effective".into(), k.into(), t.value.into()]);
        }
        if p_over_t != 0.0 {
            let sys = BiorthogonalSystem::decompose(&h_eff).context(S, ctx)?;
            let v: Operator = p_over_t * &pauli_component(&xi);
            for (k, w) in sys.first_order_eigenvalues(&v).context(S, ctx)?.iter().enumerate() {
                table.push(vec![n.into(), "first-order".into(), k.into(), (*w).into()]);
            }
        }
    }
    Ok(Report { table, diagnostics: Vec::new() })
}
