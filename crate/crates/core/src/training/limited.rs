use rand::Rng;

use super::buffer::{ReplayBuffer, Split};
use super::history::RunHistory;
use super::loss::{partial_kl_gradient, partial_kl_loss};
use super::{checkpoint_revert, Learner, RunFailure, TrainError, TrainRunConfig};
use crate::bits::BitString;
use crate::model::{GnaModel, ModelError, ModelParams};
use crate::nn::Scalar;
use crate::problems::Objective;

/// Candidates drawn per decoding pass while looking for unseen queries.
const QUERY_DRAW: usize = 16;

/// `k` candidates drawn at `beta`, each redrawn while it is already in the
/// buffer (or already chosen), for at most `retry_cap` extra draws in
/// total. Past the cap the most recent draw is accepted even if repeated.
pub fn select_queries<S: Scalar, R: Rng + ?Sized>(
    model: &GnaModel<S>,
    beta: f64,
    buffer: &ReplayBuffer,
    rng: &mut R,
    k: usize,
    retry_cap: usize,
) -> Result<Vec<BitString>, ModelError> {
    let mut chosen: Vec<BitString> = Vec::with_capacity(k);
    let mut retries = 0;
    let mut pool: Vec<BitString> = Vec::new();
    while chosen.len() < k {
        if pool.is_empty() {
            pool = model.sample(beta, QUERY_DRAW, rng)?;
            pool.reverse();
        }
        let x = pool.pop().expect("pool refilled");
        let fresh = !buffer.contains(&x) && !chosen.contains(&x);
        if fresh || retries >= retry_cap {
            chosen.push(x);
        } else {
            retries += 1;
        }
    }
    Ok(chosen)
}

fn evaluate(obj: &dyn Objective, x: &BitString) -> Result<f64, TrainError> {
    let f = obj.try_evaluate(x)?;
    if f.is_finite() {
        Ok(f)
    } else {
        Err(TrainError::NonFinite { x: x.clone(), f })
    }
}

/// Trains `steps` steps on the train split, drawing `β` per step.
fn train_round<S: Scalar, R: Rng + ?Sized>(
    learner: &mut Learner<S>,
    buffer: &ReplayBuffer,
    cfg: &TrainRunConfig,
    progress: f64,
    rng: &mut R,
) -> Result<(), TrainError> {
    let train = buffer.split(Split::Train);
    for _ in 0..cfg.steps_per_query {
        let beta = cfg.schedule.training_beta(progress, rng);
        match partial_kl_gradient(&learner.model, &train, beta) {
            Ok((_, grads)) => {
                learner.apply(&grads);
            }
            Err(TrainError::TooFewEntries(_)) => return Ok(()),
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

/// Validation loss at `β_max`, or `∞` when the split is too small.
fn validation_loss<S: Scalar>(model: &GnaModel<S>, buffer: &ReplayBuffer, beta: f64) -> Result<f64, TrainError> {
    match partial_kl_loss(model, &buffer.split(Split::Validation), beta) {
        Ok(v) => Ok(v),
        Err(TrainError::TooFewEntries(_)) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

/// Active-learning loop under a fixed query budget.
///
/// `init_random_queries` uniform queries seed the buffer and the model is
/// trained once on them. Each further query is drawn at `β_max`, evaluated,
/// inserted, and followed by `steps_per_query` training steps; a checkpoint
/// is kept after each round and every `reversion_window` queries the model
/// reverts to the window's best-validation checkpoint.
pub fn run_limited<S: Scalar, R: Rng + ?Sized>(
    obj: &dyn Objective,
    cfg: &TrainRunConfig,
    rng: &mut R,
) -> Result<(RunHistory, GnaModel<S>), Box<RunFailure>> {
    let mut history = RunHistory::new();
    let fail = |history: RunHistory, error: TrainError| Box::new(RunFailure { history, error });
    if let Err(e) = cfg.validate() {
        return Err(fail(history, e));
    }
    let n = obj.n_vars();
    let model = match GnaModel::<S>::new(cfg.model_config(n), rng) {
        Ok(m) => m,
        Err(e) => return Err(fail(history, e.into())),
    };
    let mut learner = Learner::new(model, cfg.optimizer);
    let budget = cfg.budget;
    let progress = |queries: usize| queries as f64 / budget as f64;

    let mut initial = Vec::with_capacity(cfg.init_random_queries);
    for _ in 0..cfg.init_random_queries {
        let x = BitString::random(n, rng);
        let f = match evaluate(obj, &x) {
            Ok(f) => f,
            Err(e) => return Err(fail(history, e)),
        };
        history.queries += 1;
        history.push(x.clone(), f, cfg.schedule.query_beta(0.0));
        initial.push((x, f));
    }
    let mut buffer = ReplayBuffer::seed_initial(initial, cfg.init_validation, rng);

    let mut window: Vec<(ModelParams<S>, f64)> = Vec::new();
    let round = |learner: &mut Learner<S>,
                     buffer: &ReplayBuffer,
                     window: &mut Vec<(ModelParams<S>, f64)>,
                     queries: usize,
                     rng: &mut R|
     -> Result<(), TrainError> {
        let t = progress(queries);
        train_round(learner, buffer, cfg, t, rng)?;
        let val = validation_loss(&learner.model, buffer, cfg.schedule.query_beta(t))?;
        window.push((learner.model.params.clone(), val));
        Ok(())
    };
    if let Err(e) = round(&mut learner, &buffer, &mut window, cfg.init_random_queries, rng) {
        return Err(fail(history, e));
    }

    for queries in cfg.init_random_queries..budget {
        let beta = cfg.schedule.query_beta(progress(queries));
        let step = (|| -> Result<(), TrainError> {
            let x = select_queries(&learner.model, beta, &buffer, rng, 1, cfg.query_retry_cap)?
                .pop()
                .expect("one query");
            let f = evaluate(obj, &x)?;
            history.queries += 1;
            history.push(x.clone(), f, beta);
            buffer.insert(x, f, cfg.train_probability, rng);
            round(&mut learner, &buffer, &mut window, queries + 1, rng)?;
            Ok(())
        })();
        if let Err(e) = step {
            return Err(fail(history, e));
        }
        let done = queries + 1;
        if (done - cfg.init_random_queries).is_multiple_of(cfg.reversion_window) {
            if let Some(best) = checkpoint_revert(&window, cfg.reversion_window) {
                learner.model.params = best;
            }
            window.clear();
        }
    }
    Ok((history, learner.model))
}
