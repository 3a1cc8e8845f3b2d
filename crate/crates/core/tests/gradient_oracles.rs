//! Central finite-difference checks of the analytic derivatives.

use btm_core::condense::{
    loss_grad_g_l, matching_loss, meta_grad_eta_s, meta_grad_inputs, student_unroll, CondenseConfig, MatchSegment,
    SyntheticDataset,
};
use btm_core::net::{batch_loss, grad_inputs_of_inner_product, grad_params};
use btm_core::rng::{self, DetRng};
use btm_core::{vector, Batch, Matrix, MlpSpec, ParamVector};
use rand::Rng;

const H: f64 = 1e-5;

fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = vector::dist(analytic, numeric);
    diff / vector::norm(numeric).max(vector::norm(analytic)).max(1e-8)
}

fn random_spec(rng: &mut DetRng) -> MlpSpec {
    loop {
        let depth = rng.random_range(1..=3);
        let mut widths = vec![rng.random_range(1..=6)];
        for _ in 0..depth - 1 {
            widths.push(rng.random_range(1..=8));
        }
        widths.push(1);
        let spec = MlpSpec::new(widths, 0.0, 0).unwrap();
        if spec.param_count() <= 200 {
            return spec;
        }
    }
}

fn random_batch(rng: &mut DetRng, d: usize, b: usize) -> Batch {
    let x: Vec<f64> = (0..b * d).map(|_| rng::standard_normal(rng)).collect();
    let y: Vec<f64> = (0..b).map(|_| f64::from(u8::from(rng.random::<bool>()))).collect();
    Batch::new(Matrix::from_vec(b, d, x).unwrap(), y).unwrap()
}

fn random_params(rng: &mut DetRng, spec: &MlpSpec) -> ParamVector {
    // Nonzero biases keep ReLU pre-activations away from exact kinks.
    ParamVector((0..spec.param_count()).map(|_| 0.8 * rng::standard_normal(rng)).collect())
}

fn fd_params(spec: &MlpSpec, params: &[f64], batch: &Batch) -> Vec<f64> {
    (0..params.len())
        .map(|k| {
            let mut p = params.to_vec();
            p[k] += H;
            let up = batch_loss(spec, &p, batch).unwrap();
            p[k] -= 2.0 * H;
            let down = batch_loss(spec, &p, batch).unwrap();
            (up - down) / (2.0 * H)
        })
        .collect()
}

#[test]
fn grad_params_matches_finite_differences() {
    let mut r = rng::seeded(11);
    for _ in 0..100 {
        let spec = random_spec(&mut r);
        let b = r.random_range(1..=16);
        let batch = random_batch(&mut r, spec.input_dim(), b);
        let params = random_params(&mut r, &spec);
        let g = grad_params(&spec, &params, &batch).unwrap();
        let fd = fd_params(&spec, &params, &batch);
        let e = rel_err(&g, &fd);
        assert!(e <= 1e-4, "spec {:?}: rel err {e}", spec.layer_widths);
    }
}

#[test]
fn grad_params_on_a_4_3_1_net() {
    let mut r = rng::seeded(5);
    let spec = MlpSpec::new(vec![4, 3, 1], 0.0, 0).unwrap();
    let batch = random_batch(&mut r, 4, 8);
    let params = random_params(&mut r, &spec);
    let g = grad_params(&spec, &params, &batch).unwrap();
    assert!(rel_err(&g, &fd_params(&spec, &params, &batch)) <= 1e-5);
}

fn inner_product(spec: &MlpSpec, params: &[f64], batch: &Batch, v: &[f64]) -> f64 {
    vector::dot(&grad_params(spec, params, batch).unwrap(), v)
}

#[test]
fn grad_inputs_matches_finite_differences() {
    let mut r = rng::seeded(12);
    for _ in 0..100 {
        let spec = random_spec(&mut r);
        let b = r.random_range(1..=16);
        let batch = random_batch(&mut r, spec.input_dim(), b);
        let params = random_params(&mut r, &spec);
        let v: Vec<f64> = (0..spec.param_count()).map(|_| rng::standard_normal(&mut r)).collect();
        let g = grad_inputs_of_inner_product(&spec, &params, &batch, &v).unwrap();
        let fd: Vec<f64> = (0..batch.inputs.as_slice().len())
            .map(|k| {
                let mut bp = batch.clone();
                bp.inputs.as_mut_slice()[k] += H;
                let up = inner_product(&spec, &params, &bp, &v);
                bp.inputs.as_mut_slice()[k] -= 2.0 * H;
                let down = inner_product(&spec, &params, &bp, &v);
                (up - down) / (2.0 * H)
            })
            .collect();
        let e = rel_err(g.as_slice(), &fd);
        assert!(e <= 1e-4, "spec {:?}, b = {b}: rel err {e}", spec.layer_widths);
    }
}

#[test]
fn grad_inputs_is_linear_in_v() {
    let mut r = rng::seeded(13);
    let spec = MlpSpec::new(vec![4, 5, 3, 1], 0.0, 0).unwrap();
    let batch = random_batch(&mut r, 4, 6);
    let params = random_params(&mut r, &spec);
    let n = spec.param_count();
    let v1: Vec<f64> = (0..n).map(|_| rng::standard_normal(&mut r)).collect();
    let v2: Vec<f64> = (0..n).map(|_| rng::standard_normal(&mut r)).collect();
    let sum: Vec<f64> = v1.iter().zip(&v2).map(|(a, b)| a + b).collect();
    let scaled: Vec<f64> = v1.iter().map(|a| -2.5 * a).collect();
    let g = |v: &[f64]| grad_inputs_of_inner_product(&spec, &params, &batch, v).unwrap();
    let (g1, g2, gs, gc) = (g(&v1), g(&v2), g(&sum), g(&scaled));
    for k in 0..g1.as_slice().len() {
        assert!((gs.as_slice()[k] - g1.as_slice()[k] - g2.as_slice()[k]).abs() < 1e-10);
        assert!((gc.as_slice()[k] + 2.5 * g1.as_slice()[k]).abs() < 1e-10);
    }
}

struct MetaCase {
    spec: MlpSpec,
    synth: SyntheticDataset,
    seg: MatchSegment,
    cfg: CondenseConfig,
}

impl MetaCase {
    fn new(r: &mut DetRng) -> Self {
        let d = r.random_range(2..=4);
        let spec = MlpSpec::new(vec![d, r.random_range(2..=5), 1], 0.0, 0).unwrap();
        let ipc = r.random_range(1..=3);
        let x: Vec<f64> = (0..2 * ipc * d).map(|_| rng::standard_normal(r)).collect();
        let y: Vec<f64> = (0..2 * ipc).map(|i| f64::from(u8::from(i >= ipc))).collect();
        let synth = SyntheticDataset::new(Matrix::from_vec(2 * ipc, d, x).unwrap(), y, 0.05 + 0.2 * r.random::<f64>())
            .unwrap();
        let start = random_params(r, &spec);
        let target = ParamVector(start.iter().map(|p| p + 0.3 * rng::standard_normal(r)).collect());
        let seg = MatchSegment {
            theta_start: start,
            theta_target: target,
            t_start: 0.2,
            t_end: 0.4,
        };
        let cfg = CondenseConfig {
            student_steps: 1,
            ..CondenseConfig::default()
        };
        Self { spec, synth, seg, cfg }
    }

    fn loss(&self, synth: &SyntheticDataset) -> f64 {
        let (tn, _) = student_unroll(&self.spec, &self.seg.theta_start, synth, &self.cfg, &mut rng::seeded(0)).unwrap();
        matching_loss(&tn, &self.seg).unwrap()
    }
}

#[test]
fn meta_gradients_are_exact_for_one_step() {
    let mut r = rng::seeded(21);
    for _ in 0..10 {
        let case = MetaCase::new(&mut r);
        let (tn, tape) =
            student_unroll(&case.spec, &case.seg.theta_start, &case.synth, &case.cfg, &mut rng::seeded(0)).unwrap();
        let g_l = loss_grad_g_l(&tn, &case.seg).unwrap();
        let gx = meta_grad_inputs(&case.spec, &tape, &g_l, &case.synth).unwrap();
        let fd: Vec<f64> = (0..case.synth.inputs.as_slice().len())
            .map(|k| {
                let mut s = case.synth.clone();
                s.inputs.as_mut_slice()[k] += H;
                let up = case.loss(&s);
                s.inputs.as_mut_slice()[k] -= 2.0 * H;
                let down = case.loss(&s);
                (up - down) / (2.0 * H)
            })
            .collect();
        let e = rel_err(gx.as_slice(), &fd);
        assert!(e <= 1e-3, "inputs: rel err {e}");

        let ge = meta_grad_eta_s(&tape, &g_l);
        let mut s = case.synth.clone();
        s.eta_s += H;
        let up = case.loss(&s);
        s.eta_s -= 2.0 * H;
        let down = case.loss(&s);
        let fd_eta = (up - down) / (2.0 * H);
        assert!(rel_err(&[ge], &[fd_eta]) <= 1e-3, "eta_s: {ge} vs {fd_eta}");
    }
}

#[test]
fn g_l_matches_finite_differences() {
    let mut r = rng::seeded(3);
    let case = MetaCase::new(&mut r);
    let theta: Vec<f64> = case.seg.theta_start.iter().map(|p| p + 0.1 * rng::standard_normal(&mut r)).collect();
    let g = loss_grad_g_l(&theta, &case.seg).unwrap();
    let fd: Vec<f64> = (0..theta.len())
        .map(|k| {
            let mut t = theta.clone();
            t[k] += H;
            let up = matching_loss(&t, &case.seg).unwrap();
            t[k] -= 2.0 * H;
            let down = matching_loss(&t, &case.seg).unwrap();
            (up - down) / (2.0 * H)
        })
        .collect();
    assert!(rel_err(&g, &fd) <= 1e-6);
}
