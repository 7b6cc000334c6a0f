//! Independent oracles shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use ufedgan_core::data::{ToyDistribution, UnlabeledView};
use ufedgan_core::nn::{
    gradient_vector, sample_latent, Activation, GanPair, GanSpec, LayerSpec, Model, ModelSpec, OptimizerKind, Params,
    Profile,
};
use ufedgan_core::protocol::{server_init, ClientState, Federation, ProtocolConfig};
use ufedgan_core::rng::{client_batch_stream, latent_stream, server_init_stream, StreamRng};
use ufedgan_core::tensor::{BatchNormMode, RunningStats};
use ufedgan_core::{Result, Tape, Tensor, Var};

pub fn random(rng: &mut StreamRng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.normal::<f64>(0.0, 1.0)).collect()).unwrap()
}

/// Uniform draws in `±[lo, hi]`, keeping clear of kinks at zero.
pub fn away_from_zero(rng: &mut StreamRng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = lo + (hi - lo) * rng.uniform();
            if rng.uniform() < 0.5 { -m } else { m }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// `‖a − b‖₂ / max(‖a‖₂, ‖b‖₂)`, or the absolute gap when both are tiny.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale < 1e-8 {
        diff
    } else {
        diff / scale
    }
}

pub const FD_STEP: f64 = 1e-3;

/// Worst relative error between the tape gradient of `f` and central
/// differences with step [`FD_STEP`], over every input.
pub fn fd_error(inputs: &[Tensor<f64>], f: &dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var>) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t).unwrap()).collect();
    let loss = f(&mut tape, &vars).unwrap();
    let grads = tape.backward(loss).unwrap();
    let eval = |xs: &[Tensor<f64>]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|t| tape.leaf(t).unwrap()).collect();
        let l = f(&mut tape, &vars).unwrap();
        tape.scalar_value(l).unwrap()
    };
    let mut worst: f64 = 0.0;
    for (i, input) in inputs.iter().enumerate() {
        let analytic = grads.get(vars[i]).unwrap().to_vec();
        let mut numeric = vec![0.0; input.len()];
        for (j, slot) in numeric.iter_mut().enumerate() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[j] += FD_STEP;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[j] -= FD_STEP;
            *slot = (eval(&plus) - eval(&minus)) / (2.0 * FD_STEP);
        }
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    worst
}

/// Projects a tensor-valued op onto a scalar with fixed random weights.
fn project(tape: &mut Tape<f64>, y: Var, weights: &Tensor<f64>) -> Result<Var> {
    let w = tape.constant(weights)?;
    let p = tape.mul(y, w)?;
    tape.sum(p)
}

type Primitive = (&'static str, fn(&mut StreamRng) -> Vec<Tensor<f64>>, fn(&mut Tape<f64>, &[Var]) -> Result<Var>);

fn proj_weights(shape: &[usize]) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|i| ((i as f64) * 0.731).sin() + 0.3).collect()).unwrap()
}

fn unary(tape: &mut Tape<f64>, v: &[Var], f: fn(&mut Tape<f64>, Var) -> Result<Var>) -> Result<Var> {
    let y = f(tape, v[0])?;
    let shape = tape.shape(y).to_vec();
    project(tape, y, &proj_weights(&shape))
}

fn binary(tape: &mut Tape<f64>, v: &[Var], f: fn(&mut Tape<f64>, Var, Var) -> Result<Var>) -> Result<Var> {
    let y = f(tape, v[0], v[1])?;
    let shape = tape.shape(y).to_vec();
    project(tape, y, &proj_weights(&shape))
}

/// Every differentiable tape primitive with an input generator.
pub fn primitives() -> Vec<Primitive> {
    vec![
        ("add", |r| vec![random(r, &[3, 4]), random(r, &[3, 4])], |t, v| binary(t, v, |t, a, b| t.add(a, b))),
        ("sub", |r| vec![random(r, &[3, 4]), random(r, &[3, 4])], |t, v| binary(t, v, |t, a, b| t.sub(a, b))),
        ("mul", |r| vec![random(r, &[3, 4]), random(r, &[3, 4])], |t, v| binary(t, v, |t, a, b| t.mul(a, b))),
        ("scale", |r| vec![random(r, &[5])], |t, v| unary(t, v, |t, a| t.scale(a, -1.7))),
        ("bias_add", |r| vec![random(r, &[2, 3, 2, 2]), random(r, &[3])], |t, v| binary(t, v, |t, a, b| t.bias_add(a, b))),
        ("matmul", |r| vec![random(r, &[3, 4]), random(r, &[4, 2])], |t, v| binary(t, v, |t, a, b| t.matmul(a, b))),
        (
            "conv2d",
            |r| vec![random(r, &[2, 2, 5, 5]), random(r, &[3, 2, 4, 4])],
            |t, v| binary(t, v, |t, a, b| t.conv2d(a, b, 2, 1)),
        ),
        (
            "conv_transpose2d",
            |r| vec![random(r, &[2, 3, 3, 3]), random(r, &[3, 2, 4, 4])],
            |t, v| binary(t, v, |t, a, b| t.conv_transpose2d(a, b, 2, 1)),
        ),
        ("relu", |r| vec![away_from_zero(r, &[4, 3], 0.05, 2.0)], |t, v| unary(t, v, |t, a| t.relu(a))),
        ("leaky_relu", |r| vec![away_from_zero(r, &[4, 3], 0.05, 2.0)], |t, v| unary(t, v, |t, a| t.leaky_relu(a, 0.2))),
        ("tanh", |r| vec![random(r, &[4, 3])], |t, v| unary(t, v, |t, a| t.tanh(a))),
        ("sigmoid", |r| vec![random(r, &[4, 3])], |t, v| unary(t, v, |t, a| t.sigmoid(a))),
        ("reshape", |r| vec![random(r, &[2, 6])], |t, v| unary(t, v, |t, a| t.reshape(a, &[2, 3, 2]))),
        ("avg_pool2d", |r| vec![random(r, &[2, 2, 4, 4])], |t, v| unary(t, v, |t, a| t.avg_pool2d(a, 2))),
        ("sum", |r| vec![random(r, &[3, 4])], |t, v| {
            let s = t.sum(v[0])?;
            let sq = t.mul(s, s)?;
            t.sum(sq)
        }),
        ("mean", |r| vec![random(r, &[3, 4])], |t, v| {
            let s = t.mean(v[0])?;
            let sq = t.mul(s, s)?;
            t.sum(sq)
        }),
        (
            "batchnorm",
            |r| vec![random(r, &[4, 3, 2, 2]), away_from_zero(r, &[3], 0.5, 1.5), random(r, &[3])],
            |t, v| {
                let mut stats = RunningStats::new(3);
                let y = t.batchnorm(v[0], v[1], v[2], &mut stats, BatchNormMode::Train)?;
                project(t, y, &proj_weights(&[4, 3, 2, 2]))
            },
        ),
        ("bce_loss", |r| vec![away_from_zero(r, &[6], 0.1, 2.0)], |t, v| {
            let p = t.sigmoid(v[0])?;
            t.bce_loss(p, &Tensor::new(vec![6], vec![1.0, 0.0, 0.3, 1.0, 0.0, 0.8]).unwrap())
        }),
        ("bce_with_logits", |r| vec![random(r, &[6])], |t, v| {
            t.bce_with_logits(v[0], &Tensor::new(vec![6], vec![1.0, 0.0, 0.3, 1.0, 0.0, 0.8]).unwrap())
        }),
        ("cross_entropy", |r| vec![random(r, &[4, 3])], |t, v| t.cross_entropy(v[0], &[2, 0, 1, 2])),
    ]
}

/// Worst FD error per primitive over `instances` random draws.
pub fn primitive_fd_errors(instances: usize) -> Vec<(&'static str, f64)> {
    primitives()
        .into_iter()
        .map(|(name, gen, f)| {
            let mut rng = StreamRng::new(7, name);
            let worst = (0..instances).map(|_| fd_error(&gen(&mut rng), &f)).fold(0.0, f64::max);
            (name, worst)
        })
        .collect()
}

/// Loss of a model at a flattened parameter vector, with the tape's
/// activation pattern.
type Probe<'a> = &'a dyn Fn(&mut Model<f64>) -> (f64, Vec<bool>);

fn model_loss(model: &Model<f64>, params: &[f64], eval: Probe) -> (f64, Vec<bool>) {
    let mut m = model.clone();
    m.load(params).unwrap();
    eval(&mut m)
}

/// FD check of a model loss over its parameters. Coordinates whose `±h`
/// step flips any rectifier input cross a kink and are excluded; returns the
/// error and the excluded fraction. Large models are checked on a strided
/// subset of coordinates.
fn fd_model(model: &Model<f64>, analytic: &[f64], eval: Probe) -> (f64, f64) {
    let base = model.flatten().into_inner();
    let (_, pattern) = model_loss(model, &base, eval);
    let stride = (base.len() / 600).max(1);
    let (mut a, mut n) = (Vec::new(), Vec::new());
    let mut checked = 0usize;
    for j in (0..base.len()).step_by(stride) {
        checked += 1;
        let mut p = base.clone();
        p[j] += FD_STEP;
        let (up, up_pattern) = model_loss(model, &p, eval);
        p[j] -= 2.0 * FD_STEP;
        let (down, down_pattern) = model_loss(model, &p, eval);
        if up_pattern == pattern && down_pattern == pattern {
            a.push(analytic[j]);
            n.push((up - down) / (2.0 * FD_STEP));
        }
    }
    (relative_error(&a, &n), 1.0 - a.len() as f64 / checked as f64)
}

fn bce_value(model: &mut Model<f64>, input: &Tensor<f64>, target: f64) -> (f64, Vec<bool>) {
    let mut tape = Tape::new();
    let x = tape.constant(input).unwrap();
    let fp = model.forward(&mut tape, x, BatchNormMode::TrainFrozenStats, Params::Frozen, false).unwrap();
    let targets = Tensor::full(tape.shape(fp.output).to_vec(), target);
    let l = tape.bce_with_logits(fp.output, &targets).unwrap();
    (tape.scalar_value(l).unwrap(), tape.activation_pattern())
}

/// Worst FD error of the three GAN losses of a toy profile over random
/// initializations and batches, `[real, fake, generator]`, and the largest
/// fraction of parameters excluded as kink crossings.
pub fn toy_model_fd_errors(profile: Profile, instances: usize) -> ([f64; 3], f64) {
    let mut worst = [0.0f64; 3];
    let mut excluded = 0.0f64;
    let mut record = |slot: usize, (err, skipped): (f64, f64)| {
        worst[slot] = worst[slot].max(err);
        excluded = excluded.max(skipped);
    };
    for i in 0..instances {
        let mut rng = StreamRng::new(i as u64, "toy-fd");
        let mut pair = GanPair::<f64>::init(profile, 1, &mut rng).unwrap();
        let dim = pair.discriminator.spec().input_shape[0];
        let real = random(&mut rng, &[6, dim]);
        let fake = random(&mut rng, &[6, dim]);
        let z = sample_latent::<f64>(pair.latent_dim, 6, &mut rng);

        let (_, g) = ufedgan_core::nn::discriminator_loss_real(&mut pair.discriminator, &real).unwrap();
        record(0, fd_model(&pair.discriminator, &g, &|d| bce_value(d, &real, 1.0)));
        let (_, g) = ufedgan_core::nn::discriminator_loss_fake(&mut pair.discriminator, &fake).unwrap();
        record(1, fd_model(&pair.discriminator, &g, &|d| bce_value(d, &fake, 0.0)));
        let (_, g) = ufedgan_core::nn::generator_loss(&mut pair.generator, &mut pair.discriminator, &z).unwrap();
        let d = pair.discriminator.clone();
        record(
            2,
            fd_model(&pair.generator, &g, &|gm| {
                let mut tape = Tape::new();
                let x = tape.constant(&z).unwrap();
                let fake = gm.forward(&mut tape, x, BatchNormMode::TrainFrozenStats, Params::Frozen, true).unwrap();
                let fp = d.clone().forward(&mut tape, fake.output, BatchNormMode::TrainFrozenStats, Params::Frozen, false).unwrap();
                let targets = Tensor::full(tape.shape(fp.output).to_vec(), 1.0);
                let l = tape.bce_with_logits(fp.output, &targets).unwrap();
                (tape.scalar_value(l).unwrap(), tape.activation_pattern())
            }),
        );
    }
    (worst, excluded)
}

/// Adam written out independently of the library optimizer.
pub struct ReferenceAdam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl ReferenceAdam {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64, n: usize) -> Self {
        ReferenceAdam { lr, beta1, beta2, eps, t: 0, m: vec![0.0; n], v: vec![0.0; n] }
    }

    pub fn step(&mut self, params: &mut [f32], grad: &[f32]) {
        self.t += 1;
        let (c1, c2) = (1.0 - self.beta1.powi(self.t), 1.0 - self.beta2.powi(self.t));
        for i in 0..params.len() {
            let g = grad[i] as f64;
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let update = self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
            params[i] = (params[i] as f64 - update) as f32;
        }
    }
}

/// Toy training data for a profile.
pub fn toy_view(profile: Profile, n: usize, seed: u64) -> UnlabeledView<f32> {
    let dist = match profile {
        Profile::Gaussian1d => ToyDistribution::Gaussian1d { mean: 2.0, std: 0.5 },
        _ => ToyDistribution::default_mixture(),
    };
    UnlabeledView::from_samples(dist.sample(n, &mut StreamRng::new(seed, "data")).unwrap())
}

pub fn equivalence_config() -> ProtocolConfig {
    ProtocolConfig { steps_per_round: 5, batch_size: 32, optimizer: OptimizerKind::adam(1e-3), ..ProtocolConfig::default() }
}

/// Single-process GAN training that consumes the same named streams as the
/// split protocol: one joint real+fake discriminator loss per step, then a
/// generator step. Returns the final `(D, G)` parameters.
pub fn monolithic_run(profile: Profile, seed: u64, steps: usize) -> (Vec<f32>, Vec<f32>) {
    let config = equivalence_config();
    let spec = GanSpec::for_profile(profile, 1).unwrap();
    let mut pair = spec.init::<f32>(&mut StreamRng::new(seed, &server_init_stream(0))).unwrap();
    let data = toy_view(profile, 500, seed);
    let mut batches = StreamRng::new(seed, &client_batch_stream(0));
    let mut latent = StreamRng::new(seed, &latent_stream(0));
    let (lr, b1, b2, eps) = (1e-3, 0.5, 0.999, 1e-8);
    let mut adam_d = ReferenceAdam::new(lr, b1, b2, eps, pair.discriminator.param_count());
    let mut adam_g = ReferenceAdam::new(lr, b1, b2, eps, pair.generator.param_count());
    let b = config.batch_size;
    for _ in 0..steps {
        let real = data.batch(b, &mut batches).unwrap();
        let z = sample_latent::<f32>(pair.latent_dim, b, &mut latent);
        let fake = pair.generator.predict(&z, BatchNormMode::Train).unwrap();
        let both = Tensor::concat_rows(&[&real, &fake]).unwrap();
        let mut targets = vec![1.0f32; b];
        targets.extend(vec![0.0f32; b]);

        let mut tape = Tape::new();
        let x = tape.constant(&both).unwrap();
        let fp = pair.discriminator.forward(&mut tape, x, BatchNormMode::Train, Params::Trainable, false).unwrap();
        let t = Tensor::new(tape.shape(fp.output).to_vec(), targets).unwrap();
        let mean = tape.bce_with_logits(fp.output, &t).unwrap();
        // Mean over 2B samples; the split loss is a sum of two B-sample means.
        let loss = tape.scale(mean, 2.0).unwrap();
        let grads = tape.backward(loss).unwrap();
        let gd = gradient_vector(&grads, &fp.params).unwrap();
        let mut w = pair.discriminator.flatten().into_inner();
        adam_d.step(&mut w, &gd);
        pair.discriminator.load(&w).unwrap();

        let z = sample_latent::<f32>(pair.latent_dim, b, &mut latent);
        let mut tape = Tape::new();
        let zv = tape.constant(&z).unwrap();
        let gf = pair.generator.forward(&mut tape, zv, BatchNormMode::Train, Params::Trainable, true).unwrap();
        let df = pair.discriminator.forward(&mut tape, gf.output, BatchNormMode::TrainFrozenStats, Params::Frozen, false).unwrap();
        let ones = Tensor::full(tape.shape(df.output).to_vec(), 1.0f32);
        let loss = tape.bce_with_logits(df.output, &ones).unwrap();
        let grads = tape.backward(loss).unwrap();
        let gg = gradient_vector(&grads, &gf.params).unwrap();
        let mut w = pair.generator.flatten().into_inner();
        adam_g.step(&mut w, &gg);
        pair.generator.load(&w).unwrap();
    }
    (pair.discriminator.flatten().into_inner(), pair.generator.flatten().into_inner())
}

/// The same training through server, client and wire.
pub fn split_run(profile: Profile, seed: u64, steps: usize) -> (Vec<f32>, Vec<f32>) {
    let config = equivalence_config();
    let spec = GanSpec::for_profile(profile, 1).unwrap();
    let server = server_init::<f32>(1, &spec, &config, seed).unwrap();
    let client = ClientState::new(0, toy_view(profile, 500, seed), spec.discriminator.clone(), config.batch_size, seed).unwrap();
    let mut fed = Federation::new(server, vec![client], &[]).unwrap();
    for _ in 0..steps {
        fed.protocol_step(0).unwrap();
    }
    let pair = &fed.server.user(0).unwrap().trainer.pair;
    (pair.discriminator.flatten().into_inner(), pair.generator.flatten().into_inner())
}

pub fn max_abs_diff(a: &[f32], b: &[f32]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (*x as f64 - *y as f64).abs()).fold(0.0, f64::max)
}

pub const TABULAR_P_DATA: [f64; 8] = [0.30, 0.20, 0.15, 0.10, 0.08, 0.07, 0.06, 0.04];
pub const TABULAR_P_G: [f64; 8] = [0.05, 0.10, 0.15, 0.20, 0.10, 0.15, 0.05, 0.20];

/// Trains a tabular discriminator `D(x) = σ(w_x)` through the split protocol
/// against a fixed generator distribution and returns `max_x |D(x) − D*(x)|`.
pub fn tabular_discriminator_error(seed: u64) -> f64 {
    let d = ModelSpec::new("tabular", &[8], vec![LayerSpec::linear(8, 1, Activation::Sigmoid).without_bias()]).unwrap();
    let g = ModelSpec::new("placeholder", &[1], vec![LayerSpec::linear(1, 8, Activation::Identity)]).unwrap();
    let spec = GanSpec::new(g, d.clone(), 1).unwrap();
    let batch = 2048;
    let config = ProtocolConfig { batch_size: batch, optimizer: OptimizerKind::adam(0.02), ..ProtocolConfig::default() };
    let p_data = ToyDistribution::Discrete { probs: TABULAR_P_DATA.to_vec() };
    let p_g = ToyDistribution::Discrete { probs: TABULAR_P_G.to_vec() };
    let real = p_data.sample::<f64>(200_000, &mut StreamRng::new(seed, "tabular-data")).unwrap();
    let mut server = server_init::<f64>(1, &spec, &config, seed).unwrap();
    let mut client = ClientState::new(0, UnlabeledView::from_samples(real), d, batch, seed).unwrap();
    let mut fakes = StreamRng::new(seed, "tabular-fakes");
    let steps = 3000;
    let mut average = vec![0.0; 8];
    for step in 0..steps {
        let down = server.discriminator_down(0).unwrap();
        let reply = client.client_step(&down).unwrap();
        let fake = p_g.sample::<f64>(batch, &mut fakes).unwrap();
        server.server_discriminator_step_with_fake(&reply, &fake).unwrap();
        server.server_generator_step(0).unwrap();
        // Average the iterates of the last third to damp batch noise.
        if step >= 2 * steps / 3 {
            let w = server.user(0).unwrap().trainer.pair.discriminator.flatten();
            for (a, &wi) in average.iter_mut().zip(w.iter()) {
                *a += 1.0 / (1.0 + (-wi).exp());
            }
        }
    }
    let n = (steps - 2 * steps / 3) as f64;
    (0..8)
        .map(|x| {
            let optimum = TABULAR_P_DATA[x] / (TABULAR_P_DATA[x] + TABULAR_P_G[x]);
            (average[x] / n - optimum).abs()
        })
        .fold(0.0, f64::max)
}
