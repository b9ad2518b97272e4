//! Backpropagated parameter gradients of the full per-sample loss against
//! central finite differences.

use bvmreg::losses::{LossKind, LossSpec};
use bvmreg::nn::{Architecture, HeadActivation, Mlp};
use bvmreg::numerics::{finite_diff_grad, max_relative_error, Rng};
use bvmreg::Error;

fn loss_of(model: &Mlp<f64>, spec: &LossSpec, x: &[f64], t: f64) -> Result<f64, Error> {
    let out = model.predict(x)?;
    let s2 = out.get(1).copied().unwrap_or(1.0);
    Ok(spec.per_sample(t, out[0], s2)?.value)
}

fn analytic(model: &Mlp<f64>, spec: &LossSpec, x: &[f64], t: f64) -> Vec<f64> {
    let (out, cache) = model.forward(x).unwrap();
    let s2 = out.get(1).copied().unwrap_or(1.0);
    let e = spec.per_sample(t, out[0], s2).unwrap();
    let mut d_out = vec![e.d_mu];
    if out.len() == 2 {
        d_out.push(e.d_sigma2(s2));
    }
    model.backward(&cache, &d_out).unwrap()
}

#[test]
fn fifty_random_networks() {
    let mut rng = Rng::new(2024);
    let mut worst = 0.0_f64;
    for case in 0..50 {
        let kind = [LossKind::Mse, LossKind::Nll, LossKind::Bvm][case % 3];
        let spec = match kind {
            LossKind::Mse => LossSpec::mse(),
            LossKind::Nll => LossSpec::nll(),
            LossKind::Bvm => LossSpec::bvm(rng.uniform_in(0.005, 0.3)),
        };
        let head = match (kind, rng.index(2)) {
            (LossKind::Mse, 0) => HeadActivation::Identity,
            (_, 0) => HeadActivation::MeanSoftplus,
            _ => HeadActivation::Sigmoid,
        };
        let input_dim = 1 + rng.index(4);
        let hidden: Vec<usize> = (0..1 + rng.index(2)).map(|_| 2 + rng.index(7)).collect();
        let arch = Architecture::new(input_dim, hidden, kind.output_dim(), head);
        let model = Mlp::<f64>::init(arch, &mut rng).unwrap();
        let x: Vec<f64> = (0..input_dim).map(|_| rng.uniform_in(-2.0, 2.0)).collect();
        let t = rng.uniform_in(0.0, 1.0);

        let got = analytic(&model, &spec, &x, t);
        let fd = finite_diff_grad(
            |p: &[f64]| {
                let m = Mlp::from_params(model.architecture().clone(), p.to_vec())?;
                loss_of(&m, &spec, &x, t)
            },
            model.params(),
            1e-6,
        )
        .unwrap();
        let err = max_relative_error(&got, &fd, 1e-7);
        assert!(err < 1e-5, "case {case} ({kind:?}, {head:?}): relative error {err:e}");
        worst = worst.max(err);
    }
    eprintln!("worst relative error {worst:e}");
}
