//! Central finite-difference gradient checking in `f64`.
//!
//! The numeric side only ever evaluates forward passes, so it stays
//! independent of the backward implementations it is used to verify.
//!
//! Relative error is `|analytic − numeric| / max(|analytic|, |numeric|, 1e-2)`;
//! the floor keeps entries whose true gradient is near zero from reporting
//! truncation noise as a large relative error.

use alloc::vec::Vec;

use rand::Rng as _;

use crate::autodiff::{Graph, Var};
use crate::error::TensorError;
use crate::rng::rng_from_seed;
use crate::tensor::Tensor;

pub const RELATIVE_FLOOR: f64 = 1e-2;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Maximum [`relative_error`] over paired entries.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}

/// Central-difference derivative of `f` at `x` along coordinate `index`.
pub fn central_difference(
    x: &Tensor<f64>,
    index: usize,
    h: f64,
    f: &mut impl FnMut(&Tensor<f64>) -> f64,
) -> f64 {
    let mut probe = x.clone();
    let orig = probe.data()[index];
    probe.data_mut()[index] = orig + h;
    let up = f(&probe);
    probe.data_mut()[index] = orig - h;
    let down = f(&probe);
    (up - down) / (2.0 * h)
}

/// Numeric gradient over all coordinates of `x`.
pub fn numeric_gradient(
    x: &Tensor<f64>,
    h: f64,
    mut f: impl FnMut(&Tensor<f64>) -> f64,
) -> Vec<f64> {
    (0..x.numel())
        .map(|i| central_difference(x, i, h, &mut f))
        .collect()
}

/// Outcome of [`check_op`].
#[derive(Clone, Debug)]
pub struct OpCheck {
    pub max_relative_error: f64,
    pub analytic: Vec<Vec<f64>>,
    pub numeric: Vec<Vec<f64>>,
}

/// Checks every input gradient of an operation built by `build`.
///
/// The scalar objective is `Σ out ⊙ R` for a fixed random weighting `R`, so
/// that no output coordinate is privileged.
pub fn check_op<F>(inputs: &[Tensor<f64>], h: f64, seed: u64, build: F) -> Result<OpCheck, TensorError>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var, TensorError>,
{
    let forward = |vals: &[Tensor<f64>], track: bool| -> Result<(Graph<f64>, Vec<Var>, Var), TensorError> {
        let mut g = Graph::<f64>::new().with_finite_checks(true);
        let vars: Vec<Var> = vals.iter().map(|t| g.leaf(t.clone(), track)).collect();
        let out = build(&mut g, &vars)?;
        Ok((g, vars, out))
    };

    let (probe, _, out) = forward(inputs, false)?;
    let out_shape = probe.shape(out).to_vec();
    let mut rng = rng_from_seed(seed);
    let weights: Vec<f64> = (0..probe.value(out).numel())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let weights = Tensor::new(&out_shape, weights)?;

    let objective = |vals: &[Tensor<f64>]| -> f64 {
        let (g, _, out) = forward(vals, false).expect("forward failed during finite differences");
        g.value(out)
            .data()
            .iter()
            .zip(weights.data())
            .map(|(a, b)| a * b)
            .sum()
    };

    let (mut g, vars, out) = forward(inputs, true)?;
    let w = g.constant(weights.clone());
    let weighted = g.mul(out, w)?;
    let loss = g.sum(weighted)?;
    g.backward(loss)?;

    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    let mut worst: f64 = 0.0;
    for (i, &v) in vars.iter().enumerate() {
        let a: Vec<f64> = match g.grad(v) {
            Some(t) => t.data().to_vec(),
            None => alloc::vec![0.0; inputs[i].numel()],
        };
        let n = numeric_gradient(&inputs[i], h, |probe| {
            let mut vals = inputs.to_vec();
            vals[i] = probe.clone();
            objective(&vals)
        });
        worst = worst.max(max_relative_error(&a, &n));
        analytic.push(a);
        numeric.push(n);
    }
    Ok(OpCheck {
        max_relative_error: worst,
        analytic,
        numeric,
    })
}

/// Result of one primitive in [`primitive_suite`].
#[derive(Clone, Debug)]
pub struct PrimitiveReport {
    pub name: &'static str,
    pub instances: usize,
    pub max_relative_error: f64,
}

fn uniform(rng: &mut crate::rng::Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::new(shape, data).expect("valid shape")
}

/// Values bounded away from zero (for kinks at the origin).
fn away_from_zero(rng: &mut crate::rng::Rng, shape: &[usize]) -> Tensor<f64> {
    uniform(rng, shape, -1.0, 1.0).map(|v| if v.abs() < 0.05 { v + 0.1 * v.signum() } else { v })
}

/// Pairwise-distinct values with gaps of at least 0.05 (for max/argmax ops).
fn distinct(rng: &mut crate::rng::Rng, shape: &[usize]) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let data = order.iter().map(|&r| r as f64 * 0.05 - 1.0).collect();
    Tensor::new(shape, data).expect("valid shape")
}

fn dim(rng: &mut crate::rng::Rng, lo: usize, hi: usize) -> usize {
    rng.random_range(lo..=hi)
}

/// Runs every differentiable primitive on `instances` random small shapes
/// and reports the worst relative error per primitive.
pub fn primitive_suite(instances: usize, seed: u64, h: f64) -> Result<Vec<PrimitiveReport>, TensorError> {
    type Case = (Vec<Tensor<f64>>, alloc::boxed::Box<dyn Fn(&mut Graph<f64>, &[Var]) -> Result<Var, TensorError>>);
    type Generator = fn(&mut crate::rng::Rng) -> Case;

    let generators: [(&'static str, Generator); 19] = [
        ("add", |r| {
            let (a, b) = (dim(r, 1, 4), dim(r, 1, 5));
            let rhs = match dim(r, 0, 2) {
                0 => alloc::vec![a, b],
                1 => alloc::vec![b],
                _ => alloc::vec![a, 1],
            };
            (
                alloc::vec![uniform(r, &[a, b], -1., 1.), uniform(r, &rhs, -1., 1.)],
                alloc::boxed::Box::new(|g, v| g.add(v[0], v[1])),
            )
        }),
        ("mul", |r| {
            let (a, b) = (dim(r, 1, 4), dim(r, 1, 5));
            let rhs = if dim(r, 0, 1) == 0 { alloc::vec![a, b] } else { alloc::vec![b] };
            (
                alloc::vec![uniform(r, &[a, b], -1., 1.), uniform(r, &rhs, -1., 1.)],
                alloc::boxed::Box::new(|g, v| g.mul(v[0], v[1])),
            )
        }),
        ("affine", |r| {
            let s = r.random_range(-2.0..2.0);
            (
                alloc::vec![{ let s = [dim(r, 1, 4), dim(r, 1, 4)]; uniform(r, &s, -1., 1.) }],
                alloc::boxed::Box::new(move |g, v| g.affine(v[0], s, 0.3)),
            )
        }),
        ("relu", |r| {
            (
                alloc::vec![{ let s = [dim(r, 1, 4), dim(r, 1, 6)]; away_from_zero(r, &s) }],
                alloc::boxed::Box::new(|g, v| g.relu(v[0])),
            )
        }),
        ("gelu", |r| {
            (
                alloc::vec![{ let s = [dim(r, 1, 4), dim(r, 1, 6)]; uniform(r, &s, -3., 3.) }],
                alloc::boxed::Box::new(|g, v| g.gelu(v[0])),
            )
        }),
        ("matmul", |r| {
            let (m, k, n) = (dim(r, 1, 4), dim(r, 1, 4), dim(r, 1, 4));
            let lead = dim(r, 0, 2);
            let mut ash = alloc::vec![m, k];
            let mut bsh = alloc::vec![k, n];
            if lead > 0 {
                ash.insert(0, lead);
                if dim(r, 0, 1) == 1 {
                    bsh.insert(0, lead);
                }
            }
            (
                alloc::vec![uniform(r, &ash, -1., 1.), uniform(r, &bsh, -1., 1.)],
                alloc::boxed::Box::new(|g, v| g.matmul(v[0], v[1])),
            )
        }),
        ("matmul_bt", |r| {
            let (b, m, k, n) = (dim(r, 1, 3), dim(r, 1, 4), dim(r, 1, 4), dim(r, 1, 4));
            (
                alloc::vec![uniform(r, &[b, m, k], -1., 1.), uniform(r, &[b, n, k], -1., 1.)],
                alloc::boxed::Box::new(|g, v| g.matmul_bt(v[0], v[1])),
            )
        }),
        ("conv2d", |r| {
            let (n, c, f) = (dim(r, 1, 2), dim(r, 1, 3), dim(r, 1, 3));
            let (kh, kw) = (dim(r, 1, 3), dim(r, 1, 3));
            let (stride, pad) = (dim(r, 1, 2), dim(r, 0, 1));
            let (h, w) = (dim(r, kh.max(2), 6), dim(r, kw.max(2), 6));
            (
                alloc::vec![uniform(r, &[n, c, h, w], -1., 1.), uniform(r, &[f, c, kh, kw], -1., 1.)],
                alloc::boxed::Box::new(move |g, v| g.conv2d(v[0], v[1], stride, pad)),
            )
        }),
        ("max_pool2d", |r| {
            let (n, c) = (dim(r, 1, 2), dim(r, 1, 2));
            let (size, stride) = (dim(r, 1, 2), dim(r, 1, 2));
            let (h, w) = (dim(r, 2, 6), dim(r, 2, 6));
            (
                alloc::vec![distinct(r, &[n, c, h, w])],
                alloc::boxed::Box::new(move |g, v| g.max_pool2d(v[0], size, stride)),
            )
        }),
        ("softmax", |r| {
            let shape = [dim(r, 1, 3), dim(r, 1, 4), dim(r, 1, 4)];
            let axis = dim(r, 0, 2);
            (
                alloc::vec![uniform(r, &shape, -3., 3.)],
                alloc::boxed::Box::new(move |g, v| g.softmax(v[0], axis)),
            )
        }),
        ("layer_norm", |r| {
            let (rows, d) = (dim(r, 1, 4), dim(r, 3, 6));
            (
                alloc::vec![
                    uniform(r, &[rows, d], -2., 2.),
                    uniform(r, &[d], 0.5, 1.5),
                    uniform(r, &[d], -0.5, 0.5)
                ],
                alloc::boxed::Box::new(|g, v| g.layer_norm(v[0], v[1], v[2], 1e-5)),
            )
        }),
        ("cross_entropy", |r| {
            let (n, k) = (dim(r, 1, 4), dim(r, 2, 5));
            let labels: Vec<usize> = (0..n).map(|_| dim(r, 0, k - 1)).collect();
            (
                alloc::vec![uniform(r, &[n, k], -3., 3.)],
                alloc::boxed::Box::new(move |g, v| g.cross_entropy(v[0], &labels)),
            )
        }),
        ("sum", |r| {
            (
                alloc::vec![{ let s = [dim(r, 1, 4), dim(r, 1, 4)]; uniform(r, &s, -1., 1.) }],
                alloc::boxed::Box::new(|g, v| g.sum(v[0])),
            )
        }),
        ("mean", |r| {
            let axis = dim(r, 0, 2);
            (
                alloc::vec![{ let s = [dim(r, 1, 3), dim(r, 1, 4), dim(r, 1, 4)]; uniform(r, &s, -1., 1.) }],
                alloc::boxed::Box::new(move |g, v| g.mean(v[0], axis)),
            )
        }),
        ("max", |r| {
            let axis = dim(r, 0, 1);
            (
                alloc::vec![{ let s = [dim(r, 1, 4), dim(r, 1, 4)]; distinct(r, &s) }],
                alloc::boxed::Box::new(move |g, v| g.max(v[0], axis)),
            )
        }),
        ("reshape", |r| {
            let (a, b) = (dim(r, 1, 4), dim(r, 1, 4));
            (
                alloc::vec![uniform(r, &[a, b], -1., 1.)],
                alloc::boxed::Box::new(move |g, v| g.reshape(v[0], &[b, a])),
            )
        }),
        ("transpose", |r| {
            let shape = [dim(r, 1, 3), dim(r, 1, 3), dim(r, 1, 3), dim(r, 1, 3)];
            let (d0, d1) = (dim(r, 0, 3), dim(r, 0, 3));
            (
                alloc::vec![uniform(r, &shape, -1., 1.)],
                alloc::boxed::Box::new(move |g, v| {
                    let t = g.transpose(v[0], d0, d1)?;
                    g.permute(t, &[3, 1, 0, 2])
                }),
            )
        }),
        ("embedding_lookup", |r| {
            let (vocab, d) = (dim(r, 1, 4), dim(r, 1, 4));
            let idx: Vec<usize> = (0..dim(r, 1, 6)).map(|_| dim(r, 0, vocab - 1)).collect();
            (
                alloc::vec![uniform(r, &[vocab, d], -1., 1.)],
                alloc::boxed::Box::new(move |g, v| g.embedding_lookup(v[0], &idx)),
            )
        }),
        ("concat", |r| {
            let axis = dim(r, 0, 1);
            let (a, b, c) = (dim(r, 1, 3), dim(r, 1, 3), dim(r, 1, 3));
            let (s0, s1) = if axis == 0 {
                (alloc::vec![a, c], alloc::vec![b, c])
            } else {
                (alloc::vec![c, a], alloc::vec![c, b])
            };
            (
                alloc::vec![uniform(r, &s0, -1., 1.), uniform(r, &s1, -1., 1.)],
                alloc::boxed::Box::new(move |g, v| g.concat(&[v[0], v[1], v[0]], axis)),
            )
        }),
    ];

    let mut reports = Vec::with_capacity(generators.len());
    for (p, (name, generate)) in generators.iter().enumerate() {
        let mut rng = rng_from_seed(crate::rng::derive_seed(seed, name, &[]));
        let mut worst: f64 = 0.0;
        for i in 0..instances {
            let (inputs, build) = generate(&mut rng);
            let check = check_op(&inputs, h, seed ^ ((p * 1000 + i) as u64), |g, v| build(g, v))?;
            worst = worst.max(check.max_relative_error);
        }
        reports.push(PrimitiveReport {
            name,
            instances,
            max_relative_error: worst,
        });
    }
    Ok(reports)
}
