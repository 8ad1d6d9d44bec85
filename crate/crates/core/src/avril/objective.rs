use std::f64::consts::PI;

use super::{state_input, AvrilError, AvrilModel, ObjectiveBreakdown};
use crate::diffcore::{DiffError, Objective, Tape};
use crate::envs::Transition;

/// `log softmax(beta * q)`, computed with max subtraction.
pub fn log_softmax(q: &[f64], beta: f64) -> Vec<f64> {
    let max = q.iter().map(|v| beta * v).fold(f64::NEG_INFINITY, f64::max);
    let lse = max + q.iter().map(|v| (beta * v - max).exp()).sum::<f64>().ln();
    q.iter().map(|v| beta * v - lse).collect()
}

/// KL from `N(mean, exp(log_var))` to `N(0, 1)`.
fn gaussian_kl(mean: f64, log_var: f64) -> f64 {
    0.5 * (-log_var + log_var.exp() - 1.0 + mean * mean)
}

fn gaussian_log_density(x: f64, mean: f64, log_var: f64) -> f64 {
    let resid = x - mean;
    -0.5 * (2.0 * PI).ln() - 0.5 * log_var - resid * resid / (2.0 * log_var.exp())
}

/// Both sides of the sparsity-regulariser identity for the KL term.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SparsityIdentityReport {
    /// The KL term as computed by the objective.
    pub lhs: f64,
    /// `sum 0.5 * r^2 + g(var)` with `g(v) = 0.5 * (-ln v + v - 1)`.
    pub rhs: f64,
    pub gap: f64,
    /// Largest `|mean - implied reward|`; the identity assumes this is zero.
    pub mean_mismatch: f64,
}

impl AvrilModel {
    fn encoder_head(&self, params: &[f64], tr: &Transition, tape: &mut Tape, buf: &mut Vec<f64>) -> Result<(f64, f64), AvrilError> {
        let input = self.encoder_input(&tr.state, tr.action, buf);
        self.encoder.forward_tape(self.phi(params), input, tape)?;
        let out = tape.output();
        Ok((out[0], out[1]))
    }

    /// `sum log softmax_beta(Q(s))[a]` over the batch.
    pub fn policy_log_likelihood<'a, I>(&self, params: &[f64], batch: I) -> Result<f64, AvrilError>
    where
        I: IntoIterator<Item = &'a Transition>,
    {
        self.check_params(params)?;
        let theta = self.theta(params);
        let mut total = 0.0;
        for tr in batch {
            let q = self.decoder.forward(theta, state_input(&tr.state))?;
            total += log_softmax(&q, self.config.beta)[tr.action];
        }
        Ok(total)
    }

    /// `sum KL(q(R(x)) || N(0, 1))` with `x` the reward query point of each tuple.
    pub fn kl_term<'a, I>(&self, params: &[f64], batch: I) -> Result<f64, AvrilError>
    where
        I: IntoIterator<Item = &'a Transition>,
    {
        self.check_params(params)?;
        let (mut tape, mut buf) = (Tape::default(), Vec::new());
        let mut total = 0.0;
        for tr in batch {
            let (mean, log_var) = self.encoder_head(params, tr, &mut tape, &mut buf)?;
            total += gaussian_kl(mean, log_var);
        }
        Ok(total)
    }

    /// `sum log q(Q(s, a) - gamma * Q(s', a'))`, the posterior log-density of the implied reward.
    pub fn constraint_term<'a, I>(&self, params: &[f64], batch: I) -> Result<f64, AvrilError>
    where
        I: IntoIterator<Item = &'a Transition>,
    {
        self.check_params(params)?;
        let (mut tape, mut buf) = (Tape::default(), Vec::new());
        let mut total = 0.0;
        for tr in batch {
            let (mean, log_var) = self.encoder_head(params, tr, &mut tape, &mut buf)?;
            let r = self.implied_reward(params, tr)?;
            total += gaussian_log_density(r, mean, log_var);
        }
        Ok(total)
    }

    /// All three terms and their `lambda`-weighted total.
    pub fn objective<'a, I>(&self, params: &[f64], batch: I) -> Result<ObjectiveBreakdown, AvrilError>
    where
        I: IntoIterator<Item = &'a Transition>,
        I::IntoIter: Clone,
    {
        let batch = batch.into_iter();
        let out = ObjectiveBreakdown::new(
            self.policy_log_likelihood(params, batch.clone())?,
            self.kl_term(params, batch.clone())?,
            self.constraint_term(params, batch)?,
            self.config.lambda,
        );
        out.check_finite()?;
        Ok(out)
    }

    /// Objective and its exact gradient with respect to the joint parameters,
    /// both multiplied by `scale` (the `n / b` minibatch factor).
    pub fn objective_and_gradient<'a, I>(
        &self,
        params: &[f64],
        batch: I,
        scale: f64,
    ) -> Result<(ObjectiveBreakdown, Vec<f64>), AvrilError>
    where
        I: IntoIterator<Item = &'a Transition>,
    {
        self.check_params(params)?;
        let (beta, gamma, lambda) = (self.config.beta, self.config.gamma, self.config.lambda);
        let n_phi = self.encoder.n_params();
        let (phi, theta) = params.split_at(n_phi);
        let mut grad = vec![0.0; params.len()];
        let (grad_phi, grad_theta) = grad.split_at_mut(n_phi);

        let (mut tape_q, mut tape_next, mut tape_enc) = (Tape::default(), Tape::default(), Tape::default());
        let mut buf = Vec::new();
        let mut d_q = vec![0.0; self.n_actions];
        let mut d_q_next = vec![0.0; self.n_actions];
        let (mut log_likelihood, mut kl, mut constraint) = (0.0, 0.0, 0.0);

        for tr in batch {
            let s_in = state_input(&tr.state);
            self.decoder.forward_tape(theta, s_in, &mut tape_q)?;
            let q = tape_q.output();
            let log_probs = log_softmax(q, beta);
            log_likelihood += log_probs[tr.action];
            for (b, (d, lp)) in d_q.iter_mut().zip(&log_probs).enumerate() {
                let target = if b == tr.action { 1.0 } else { 0.0 };
                *d = beta * (target - lp.exp());
            }

            let enc_in = self.encoder_input(&tr.state, tr.action, &mut buf);
            self.encoder.forward_tape(phi, enc_in, &mut tape_enc)?;
            let (mean, log_var) = (tape_enc.output()[0], tape_enc.output()[1]);
            let var = log_var.exp();
            kl += gaussian_kl(mean, log_var);
            let mut d_mean = -mean;
            let mut d_log_var = -0.5 * (var - 1.0);

            let next_in = state_input(&tr.next_state);
            self.decoder.forward_tape(theta, next_in, &mut tape_next)?;
            let implied = q[tr.action] - gamma * tape_next.output()[tr.next_action];
            let resid = implied - mean;
            constraint += gaussian_log_density(implied, mean, log_var);
            let d_implied = -resid / var;
            d_q[tr.action] += lambda * d_implied;
            d_q_next.fill(0.0);
            d_q_next[tr.next_action] = -gamma * lambda * d_implied;
            d_mean += lambda * resid / var;
            d_log_var += lambda * (-0.5 + resid * resid / (2.0 * var));

            self.decoder.backward(theta, s_in, &tape_q, &d_q, grad_theta);
            self.decoder.backward(theta, next_in, &tape_next, &d_q_next, grad_theta);
            self.encoder.backward(phi, enc_in, &tape_enc, &[d_mean, d_log_var], grad_phi);
        }

        let out = ObjectiveBreakdown::new(log_likelihood * scale, kl * scale, constraint * scale, lambda);
        out.check_finite()?;
        for g in &mut grad {
            *g *= scale;
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(DiffError::NonFinite { term: "gradient" }.into());
        }
        Ok((out, grad))
    }

    /// Compares the KL term with `sum 0.5 * r^2 + g(var)`.
    ///
    /// The two agree when the posterior mean at every tuple equals its
    /// implied reward; `mean_mismatch` reports how far that precondition is
    /// from holding rather than enforcing it.
    pub fn sparsity_identity_check(&self, params: &[f64], batch: &[Transition]) -> Result<SparsityIdentityReport, AvrilError> {
        let lhs = self.kl_term(params, batch)?;
        let (mut tape, mut buf) = (Tape::default(), Vec::new());
        let mut rhs = 0.0;
        let mut mean_mismatch: f64 = 0.0;
        for tr in batch {
            let (mean, log_var) = self.encoder_head(params, tr, &mut tape, &mut buf)?;
            let r = self.implied_reward(params, tr)?;
            let var = log_var.exp();
            rhs += 0.5 * r * r + 0.5 * (-var.ln() + var - 1.0);
            mean_mismatch = mean_mismatch.max((mean - r).abs());
        }
        Ok(SparsityIdentityReport {
            lhs,
            rhs,
            gap: (lhs - rhs).abs(),
            mean_mismatch,
        })
    }
}

/// The total objective on a fixed batch, as a [`crate::diffcore::Objective`].
pub struct BatchObjective<'a> {
    pub model: &'a AvrilModel,
    pub batch: &'a [Transition],
}

impl Objective for BatchObjective<'_> {
    fn value(&self, params: &[f64]) -> Result<f64, DiffError> {
        match self.model.objective(params, self.batch) {
            Ok(b) => Ok(b.total),
            Err(AvrilError::Diff(e)) => Err(e),
            Err(e) => Err(DiffError::Layout(e.to_string())),
        }
    }

    fn value_and_gradient(&self, params: &[f64]) -> Result<(f64, Vec<f64>), DiffError> {
        match self.model.objective_and_gradient(params, self.batch, 1.0) {
            Ok((b, g)) => Ok((b.total, g)),
            Err(AvrilError::Diff(e)) => Err(e),
            Err(e) => Err(DiffError::Layout(e.to_string())),
        }
    }
}
