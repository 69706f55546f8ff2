use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::optim::{Moments, Stepper};
use super::{
    sample_negative, sigmoid, softplus, train_items_by_user, EpochTrainer, HyperParams, ModelError, ModelKind,
    RankerState, TrainedRanker,
};
use crate::data::{Dataset, ItemIdx, UserIdx};

/// Fully connected layer, weights stored row-major as `n_out x n_in`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn zeros(n_in: usize, n_out: usize) -> Dense {
        Dense {
            n_in,
            n_out,
            weights: vec![0.0; n_in * n_out],
            bias: vec![0.0; n_out],
        }
    }

    fn xavier(n_in: usize, n_out: usize, rng: &mut ChaCha8Rng) -> Dense {
        let normal = Normal::new(0.0, (2.0 / (n_in + n_out) as f64).sqrt()).expect("valid normal");
        Dense {
            weights: (0..n_in * n_out).map(|_| normal.sample(rng)).collect(),
            ..Dense::zeros(n_in, n_out)
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_out)
            .map(|o| {
                let row = &self.weights[o * self.n_in..(o + 1) * self.n_in];
                self.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }
}

/// ReLU hidden layers followed by a single linear output unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    /// Hidden layers, then the output layer.
    pub layers: Vec<Dense>,
}

/// Per-layer gradients shaped like [`Mlp::layers`], plus the gradient
/// with respect to the network input.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpGradient {
    pub layers: Vec<Dense>,
    pub input: Vec<f64>,
}

struct Trace {
    /// Input to every layer, including the output layer.
    acts: Vec<Vec<f64>>,
    /// Hidden pre-activations.
    pre: Vec<Vec<f64>>,
    /// Inverted-dropout scale per hidden unit (1 when inactive).
    masks: Vec<Vec<f64>>,
    logit: f64,
}

impl Mlp {
    fn new(n_in: usize, hidden: &[usize], rng: &mut ChaCha8Rng) -> Mlp {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut width = n_in;
        for &h in hidden {
            layers.push(Dense::xavier(width, h, rng));
            width = h;
        }
        layers.push(Dense::xavier(width, 1, rng));
        Mlp { layers }
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        self.trace(x, None).logit
    }

    fn trace(&self, x: &[f64], mut dropout: Option<(f64, &mut ChaCha8Rng)>) -> Trace {
        let last = self.layers.len() - 1;
        let mut t = Trace {
            acts: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(last),
            masks: Vec::with_capacity(last),
            logit: 0.0,
        };
        let mut a = x.to_vec();
        for layer in &self.layers[..last] {
            let z = layer.forward(&a);
            let mask: Vec<f64> = match dropout.as_mut() {
                Some((p, rng)) if *p > 0.0 => {
                    let keep = 1.0 / (1.0 - *p);
                    (0..z.len()).map(|_| if rng.random::<f64>() < *p { 0.0 } else { keep }).collect()
                }
                _ => vec![1.0; z.len()],
            };
            let h = z.iter().zip(&mask).map(|(v, m)| v.max(0.0) * m).collect();
            t.acts.push(std::mem::replace(&mut a, h));
            t.pre.push(z);
            t.masks.push(mask);
        }
        t.logit = self.layers[last].forward(&a)[0];
        t.acts.push(a);
        t
    }

    fn backward(&self, t: &Trace, dlogit: f64) -> MlpGradient {
        let mut layers: Vec<Dense> = self.layers.iter().map(|l| Dense::zeros(l.n_in, l.n_out)).collect();
        let mut delta = vec![dlogit];
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let a = &t.acts[l];
            let g = &mut layers[l];
            let mut da = vec![0.0; layer.n_in];
            for o in 0..layer.n_out {
                g.bias[o] = delta[o];
                let row = o * layer.n_in;
                for k in 0..layer.n_in {
                    g.weights[row + k] = delta[o] * a[k];
                    da[k] += layer.weights[row + k] * delta[o];
                }
            }
            if l == 0 {
                return MlpGradient { layers, input: da };
            }
            delta = da
                .iter()
                .enumerate()
                .map(|(k, d)| if t.pre[l - 1][k] > 0.0 { d * t.masks[l - 1][k] } else { 0.0 })
                .collect();
        }
        unreachable!("mlp has at least one layer")
    }
}

/// MLP-only neural collaborative filter over concatenated user and item embeddings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ncf {
    dim: usize,
    user_emb: Vec<f64>,
    item_emb: Vec<f64>,
    mlp: Mlp,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NcfGradient {
    pub user: Vec<f64>,
    pub item: Vec<f64>,
    pub mlp: MlpGradient,
}

impl NcfGradient {
    /// User row, item row, then each layer's weights and bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = self.user.clone();
        out.extend(&self.item);
        for l in &self.mlp.layers {
            out.extend(&l.weights);
            out.extend(&l.bias);
        }
        out
    }
}

impl Ncf {
    fn init(n_users: usize, n_items: usize, dim: usize, hidden: &[usize], rng: &mut ChaCha8Rng) -> Ncf {
        let normal = Normal::new(0.0, 0.01).expect("valid normal");
        let user_emb = (0..n_users * dim).map(|_| normal.sample(rng)).collect();
        let item_emb = (0..n_items * dim).map(|_| normal.sample(rng)).collect();
        Ncf {
            dim,
            user_emb,
            item_emb,
            mlp: Mlp::new(2 * dim, hidden, rng),
        }
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    fn input(&self, user: usize, item: usize) -> Vec<f64> {
        let d = self.dim;
        let mut x = Vec::with_capacity(2 * d);
        x.extend(&self.user_emb[user * d..(user + 1) * d]);
        x.extend(&self.item_emb[item * d..(item + 1) * d]);
        x
    }

    pub fn logit(&self, user: UserIdx, item: ItemIdx) -> f64 {
        self.mlp.logit(&self.input(user.index(), item.index()))
    }

    /// Predicted interaction probability.
    pub fn score(&self, user: UserIdx, item: ItemIdx) -> f64 {
        sigmoid(self.logit(user, item))
    }

    /// Binary cross-entropy of one labelled pair, no dropout.
    pub fn loss(&self, user: UserIdx, item: ItemIdx, label: f64) -> f64 {
        let z = self.logit(user, item);
        softplus(z) - label * z
    }

    /// Gradient of [`Ncf::loss`] in the order of [`NcfGradient::flatten`].
    pub fn gradient(&self, user: UserIdx, item: ItemIdx, label: f64) -> NcfGradient {
        let t = self.mlp.trace(&self.input(user.index(), item.index()), None);
        let mlp = self.mlp.backward(&t, sigmoid(t.logit) - label);
        NcfGradient {
            user: mlp.input[..self.dim].to_vec(),
            item: mlp.input[self.dim..].to_vec(),
            mlp,
        }
    }

    /// Number of parameters one (user, item) sample touches.
    pub fn sample_parameter_count(&self) -> usize {
        2 * self.dim + self.mlp.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum::<usize>()
    }

    /// The `k`-th parameter touched by a (user, item) sample, ordered as in [`NcfGradient::flatten`].
    pub fn sample_parameter_mut(&mut self, user: UserIdx, item: ItemIdx, k: usize) -> &mut f64 {
        let d = self.dim;
        if k < d {
            return &mut self.user_emb[user.index() * d + k];
        }
        if k < 2 * d {
            return &mut self.item_emb[item.index() * d + k - d];
        }
        let mut k = k - 2 * d;
        for l in &mut self.mlp.layers {
            if k < l.weights.len() {
                return &mut l.weights[k];
            }
            k -= l.weights.len();
            if k < l.bias.len() {
                return &mut l.bias[k];
            }
            k -= l.bias.len();
        }
        panic!("parameter index out of range")
    }
}

/// Pointwise BCE training with uniformly sampled negatives.
pub struct NcfTrainer {
    model: Ncf,
    hp: HyperParams,
    seed: u64,
    rng: ChaCha8Rng,
    pairs: Vec<(u32, u32)>,
    seen: Vec<Vec<u32>>,
    n_items: usize,
    stepper: Stepper,
    user_moments: Moments,
    item_moments: Moments,
    layer_moments: Vec<(Moments, Moments)>,
    epochs: usize,
}

impl NcfTrainer {
    pub fn new(train: &Dataset, hp: &HyperParams, seed: u64) -> Result<NcfTrainer, ModelError> {
        hp.validate(ModelKind::Ncf)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n_users, n_items, dim) = (train.n_users(), train.n_items(), hp.embedding_dim);
        let model = Ncf::init(n_users, n_items, dim, &hp.mlp_hidden, &mut rng);
        let layer_moments = model
            .mlp
            .layers
            .iter()
            .map(|l| (Moments::new(hp.optimizer, l.weights.len()), Moments::new(hp.optimizer, l.bias.len())))
            .collect();
        Ok(NcfTrainer {
            model,
            hp: hp.clone(),
            seed,
            rng,
            pairs: train.interactions().iter().map(|i| (i.user.0, i.item.0)).collect(),
            seen: train_items_by_user(train),
            n_items,
            stepper: Stepper::new(hp.optimizer, hp.learning_rate),
            user_moments: Moments::new(hp.optimizer, n_users * dim),
            item_moments: Moments::new(hp.optimizer, n_items * dim),
            layer_moments,
            epochs: 0,
        })
    }

    fn step(&mut self, u: usize, i: usize, label: f64) {
        let d = self.model.dim;
        let x = self.model.input(u, i);
        let t = self.model.mlp.trace(&x, Some((self.hp.dropout, &mut self.rng)));
        let g = self.model.mlp.backward(&t, sigmoid(t.logit) - label);
        let l2 = 2.0 * self.hp.l2_reg;
        let gu: Vec<f64> = (0..d).map(|k| g.input[k] + l2 * x[k]).collect();
        let gi: Vec<f64> = (0..d).map(|k| g.input[d + k] + l2 * x[d + k]).collect();

        self.stepper.tick();
        let (m, v) = self.user_moments.slice(u * d, d);
        self.stepper.apply(&mut self.model.user_emb[u * d..(u + 1) * d], &gu, m, v);
        let (m, v) = self.item_moments.slice(i * d, d);
        self.stepper.apply(&mut self.model.item_emb[i * d..(i + 1) * d], &gi, m, v);
        for ((layer, grad), (mw, mb)) in self.model.mlp.layers.iter_mut().zip(&g.layers).zip(&mut self.layer_moments) {
            let (m, v) = mw.slice(0, layer.weights.len());
            self.stepper.apply(&mut layer.weights, &grad.weights, m, v);
            let (m, v) = mb.slice(0, layer.bias.len());
            self.stepper.apply(&mut layer.bias, &grad.bias, m, v);
        }
    }
}

impl EpochTrainer for NcfTrainer {
    fn run_epoch(&mut self) {
        let neg = self.hp.negatives_per_positive;
        let mut samples = Vec::with_capacity(self.pairs.len() * (1 + neg));
        for &(u, i) in &self.pairs {
            samples.push((u, i, 1.0));
            for _ in 0..neg {
                if let Some(j) = sample_negative(&mut self.rng, &self.seen[u as usize], self.n_items) {
                    samples.push((u, j, 0.0));
                }
            }
        }
        samples.shuffle(&mut self.rng);
        for (u, i, y) in samples {
            self.step(u as usize, i as usize, y);
        }
        self.epochs += 1;
    }

    fn snapshot(&self) -> TrainedRanker {
        TrainedRanker {
            kind: ModelKind::Ncf,
            state: RankerState::Ncf(self.model.clone()),
            training_seed: self.seed,
            hyperparameters: self.hp.clone(),
            n_users: self.seen.len(),
            n_items: self.n_items,
            epochs_trained: self.epochs,
        }
    }
}

/// Trains NCF for exactly `hp.epochs` epochs.
pub fn train_ncf(train: &Dataset, hp: &HyperParams, seed: u64) -> Result<TrainedRanker, ModelError> {
    let mut t = NcfTrainer::new(train, hp, seed)?;
    for _ in 0..hp.epochs {
        t.run_epoch();
    }
    Ok(t.snapshot())
}
