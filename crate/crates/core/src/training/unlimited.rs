use rand::Rng;

use super::history::RunHistory;
use super::loss::free_energy_gradient;
use super::{Learner, RunFailure, TrainError, TrainRunConfig};
use crate::model::GnaModel;
use crate::nn::Scalar;
use crate::problems::Objective;

/// Free-energy training with unrestricted queries.
///
/// Each step draws `β` from the schedule at progress = step index, builds a
/// reweighted batch at that `β`, evaluates every distinct configuration,
/// records the batch minimum, and notes the first step that sees
/// `f <= target_f`. With `stop_at_target` the run ends there, before the
/// gradient update; otherwise it trains through to `max_steps`.
pub fn run_unlimited<S: Scalar, R: Rng + ?Sized>(
    obj: &dyn Objective,
    cfg: &TrainRunConfig,
    rng: &mut R,
) -> Result<(RunHistory, GnaModel<S>), Box<RunFailure>> {
    let mut history = RunHistory::new();
    let fail = |history: RunHistory, error: TrainError| Box::new(RunFailure { history, error });
    if let Err(e) = cfg.validate() {
        return Err(fail(history, e));
    }
    let model = match GnaModel::<S>::new(cfg.model_config(obj.n_vars()), rng) {
        Ok(m) => m,
        Err(e) => return Err(fail(history, e.into())),
    };
    let mut learner = Learner::new(model, cfg.optimizer);

    for step in 0..cfg.max_steps {
        let result = (|| -> Result<bool, TrainError> {
            let beta = cfg.schedule.training_beta(step as f64, rng);
            let batch = learner.model.sample_unique_reweighted(beta, cfg.n_batch, cfg.n_unique, rng)?;
            let fs = batch
                .configs
                .iter()
                .map(|x| obj.try_evaluate(x))
                .collect::<Result<Vec<f64>, _>>()?;
            history.queries += fs.len() as u64;
            let est = free_energy_gradient(&learner.model, &batch, &fs, beta)?;
            history.push(batch.configs[est.argmin].clone(), est.min_f, beta);
            log::debug!(
                "step {} beta {beta:.4} F {:.4} <f> {:.4} min f {}",
                step + 1,
                est.free_energy,
                est.mean_f,
                est.min_f
            );
            if est.min_f <= cfg.target_f && history.steps_to_solve.is_none() {
                history.steps_to_solve = Some(step + 1);
                if cfg.stop_at_target {
                    return Ok(true);
                }
            }
            learner.apply(&est.grads);
            Ok(false)
        })();
        match result {
            Ok(true) => break,
            Ok(false) => {}
            Err(e) => return Err(fail(history, e)),
        }
    }
    Ok((history, learner.model))
}
