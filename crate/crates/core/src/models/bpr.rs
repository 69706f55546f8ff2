use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::optim::{Moments, Stepper};
use super::{
    sample_negative, sigmoid, softplus, train_items_by_user, EpochTrainer, HyperParams, ModelError, ModelKind,
    RankerState, TrainedRanker,
};
use crate::data::{Dataset, ItemIdx, UserIdx};

/// Matrix factorization scored as `b_i + <p_u, q_i>`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bpr {
    dim: usize,
    user_factors: Vec<f64>,
    item_factors: Vec<f64>,
    item_bias: Vec<f64>,
}

impl Bpr {
    fn init(n_users: usize, n_items: usize, dim: usize, rng: &mut ChaCha8Rng) -> Bpr {
        let normal = Normal::new(0.0, 0.01).expect("valid normal");
        let user_factors = (0..n_users * dim).map(|_| normal.sample(rng)).collect();
        let item_factors = (0..n_items * dim).map(|_| normal.sample(rng)).collect();
        Bpr {
            dim,
            user_factors,
            item_factors,
            item_bias: vec![0.0; n_items],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn user_row(&self, user: UserIdx) -> &[f64] {
        &self.user_factors[user.index() * self.dim..(user.index() + 1) * self.dim]
    }

    pub fn item_row(&self, item: ItemIdx) -> &[f64] {
        &self.item_factors[item.index() * self.dim..(item.index() + 1) * self.dim]
    }

    pub fn item_bias(&self, item: ItemIdx) -> f64 {
        self.item_bias[item.index()]
    }

    pub fn score(&self, user: UserIdx, item: ItemIdx) -> f64 {
        self.item_bias(item) + dot(self.user_row(user), self.item_row(item))
    }

    #[cfg(test)]
    pub(crate) fn zero(&mut self) {
        self.user_factors.iter_mut().for_each(|x| *x = 0.0);
        self.item_factors.iter_mut().for_each(|x| *x = 0.0);
        self.item_bias.iter_mut().for_each(|x| *x = 0.0);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gradient of [`bpr_objective`] (ascent direction) for one (u, i, j) triple.
#[derive(Clone, Debug, PartialEq)]
pub struct BprGradient {
    pub user: Vec<f64>,
    pub pos_item: Vec<f64>,
    pub neg_item: Vec<f64>,
    pub pos_bias: f64,
    pub neg_bias: f64,
}

/// `ln σ(x_ui − x_uj) − λ(|p_u|² + |q_i|² + |q_j|² + b_i² + b_j²)`.
pub fn bpr_objective(p_u: &[f64], q_i: &[f64], q_j: &[f64], b_i: f64, b_j: f64, l2: f64) -> f64 {
    let x = b_i - b_j + dot(p_u, q_i) - dot(p_u, q_j);
    let norm = dot(p_u, p_u) + dot(q_i, q_i) + dot(q_j, q_j) + b_i * b_i + b_j * b_j;
    -softplus(-x) - l2 * norm
}

pub fn bpr_gradient(p_u: &[f64], q_i: &[f64], q_j: &[f64], b_i: f64, b_j: f64, l2: f64) -> BprGradient {
    let x = b_i - b_j + dot(p_u, q_i) - dot(p_u, q_j);
    let g = sigmoid(-x);
    BprGradient {
        user: (0..p_u.len()).map(|k| g * (q_i[k] - q_j[k]) - 2.0 * l2 * p_u[k]).collect(),
        pos_item: p_u.iter().zip(q_i).map(|(p, q)| g * p - 2.0 * l2 * q).collect(),
        neg_item: p_u.iter().zip(q_j).map(|(p, q)| -g * p - 2.0 * l2 * q).collect(),
        pos_bias: g - 2.0 * l2 * b_i,
        neg_bias: -g - 2.0 * l2 * b_j,
    }
}

/// Stochastic BPR training over uniformly sampled (u, i, j) triples.
pub struct BprTrainer {
    model: Bpr,
    hp: HyperParams,
    seed: u64,
    rng: ChaCha8Rng,
    pairs: Vec<(u32, u32)>,
    seen: Vec<Vec<u32>>,
    n_items: usize,
    stepper: Stepper,
    user_moments: Moments,
    item_moments: Moments,
    bias_moments: Moments,
    epochs: usize,
}

impl BprTrainer {
    pub fn new(train: &Dataset, hp: &HyperParams, seed: u64) -> Result<BprTrainer, ModelError> {
        hp.validate(ModelKind::Bpr)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n_users, n_items, dim) = (train.n_users(), train.n_items(), hp.embedding_dim);
        let model = Bpr::init(n_users, n_items, dim, &mut rng);
        let seen = train_items_by_user(train);
        let full: Vec<_> = seen.iter().enumerate().filter(|(_, s)| s.len() >= n_items).map(|(u, _)| u).collect();
        if !full.is_empty() {
            log::warn!("{} users rated every item; no BPR triples are sampled for them", full.len());
        }
        Ok(BprTrainer {
            model,
            hp: hp.clone(),
            seed,
            rng,
            pairs: train.interactions().iter().map(|i| (i.user.0, i.item.0)).collect(),
            seen,
            n_items,
            stepper: Stepper::new(hp.optimizer, hp.learning_rate),
            user_moments: Moments::new(hp.optimizer, n_users * dim),
            item_moments: Moments::new(hp.optimizer, n_items * dim),
            bias_moments: Moments::new(hp.optimizer, n_items),
            epochs: 0,
        })
    }

    fn step(&mut self, u: usize, i: usize, j: usize) {
        let d = self.model.dim;
        let m = &mut self.model;
        let grad = bpr_gradient(
            &m.user_factors[u * d..(u + 1) * d],
            &m.item_factors[i * d..(i + 1) * d],
            &m.item_factors[j * d..(j + 1) * d],
            m.item_bias[i],
            m.item_bias[j],
            self.hp.l2_reg,
        );
        let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<f64>>();
        self.stepper.tick();
        let (mm, vv) = self.user_moments.slice(u * d, d);
        self.stepper.apply(&mut m.user_factors[u * d..(u + 1) * d], &neg(&grad.user), mm, vv);
        let (mm, vv) = self.item_moments.slice(i * d, d);
        self.stepper.apply(&mut m.item_factors[i * d..(i + 1) * d], &neg(&grad.pos_item), mm, vv);
        let (mm, vv) = self.item_moments.slice(j * d, d);
        self.stepper.apply(&mut m.item_factors[j * d..(j + 1) * d], &neg(&grad.neg_item), mm, vv);
        let (mm, vv) = self.bias_moments.slice(i, 1);
        self.stepper.apply(&mut m.item_bias[i..i + 1], &[-grad.pos_bias], mm, vv);
        let (mm, vv) = self.bias_moments.slice(j, 1);
        self.stepper.apply(&mut m.item_bias[j..j + 1], &[-grad.neg_bias], mm, vv);
    }
}

impl EpochTrainer for BprTrainer {
    fn run_epoch(&mut self) {
        use rand::Rng;
        for _ in 0..self.pairs.len() {
            let (u, i) = self.pairs[self.rng.random_range(0..self.pairs.len())];
            let Some(j) = sample_negative(&mut self.rng, &self.seen[u as usize], self.n_items) else {
                continue;
            };
            self.step(u as usize, i as usize, j as usize);
        }
        self.epochs += 1;
    }

    fn snapshot(&self) -> TrainedRanker {
        TrainedRanker {
            kind: ModelKind::Bpr,
            state: RankerState::Bpr(self.model.clone()),
            training_seed: self.seed,
            hyperparameters: self.hp.clone(),
            n_users: self.seen.len(),
            n_items: self.n_items,
            epochs_trained: self.epochs,
        }
    }
}

/// Trains BPR for exactly `hp.epochs` epochs; zero epochs returns the initialization.
pub fn train_bpr(train: &Dataset, hp: &HyperParams, seed: u64) -> Result<TrainedRanker, ModelError> {
    let mut t = BprTrainer::new(train, hp, seed)?;
    for _ in 0..hp.epochs {
        t.run_epoch();
    }
    Ok(t.snapshot())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = 6;
        let mut v = |n: usize| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
        let (p, qi, qj) = (v(d), v(d), v(d));
        let (bi, bj, l2) = (0.3, -0.2, 0.01);
        let g = bpr_gradient(&p, &qi, &qj, bi, bj, l2);
        let h = 1e-5;
        for k in 0..d {
            let (mut a, mut b) = (p.clone(), p.clone());
            a[k] += h;
            b[k] -= h;
            let fd = (bpr_objective(&a, &qi, &qj, bi, bj, l2) - bpr_objective(&b, &qi, &qj, bi, bj, l2)) / (2.0 * h);
            assert!((fd - g.user[k]).abs() < 1e-8);
        }
        let fd = (bpr_objective(&p, &qi, &qj, bi + h, bj, l2) - bpr_objective(&p, &qi, &qj, bi - h, bj, l2)) / (2.0 * h);
        assert!((fd - g.pos_bias).abs() < 1e-8);
    }

    #[test]
    fn same_seed_same_model() {
        let text: String = (1..=6)
            .flat_map(|u| (1..=4).map(move |i| format!("{u} {} 4 0\n", (u + i) % 8 + 1)))
            .collect();
        let ds = crate::data::parse_ratings(text.as_bytes(), crate::data::DatasetFormat::Ml100k).unwrap();
        let hp = HyperParams {
            embedding_dim: 4,
            epochs: 3,
            ..HyperParams::default()
        };
        assert_eq!(train_bpr(&ds, &hp, 5).unwrap(), train_bpr(&ds, &hp, 5).unwrap());
        assert_ne!(train_bpr(&ds, &hp, 5).unwrap(), train_bpr(&ds, &hp, 6).unwrap());
    }
}
