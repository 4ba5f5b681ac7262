//! Cycle-consistency and adversarial objectives.

use serde::{Deserialize, Serialize};

use super::nets::Network;
use crate::autodiff::{Graph, Scalar, Var};
use crate::error::Result;

/// Probabilities are clamped here before taking logs.
pub const LOG_FLOOR: f64 = 1e-7;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdvMode {
    /// Generators minimize the discriminator objective itself.
    Minimax,
    /// Generators minimize `-log D(fake)`.
    #[default]
    Nonsaturating,
    /// Squared-error targets on raw discriminator scores.
    LeastSquares,
}

impl std::fmt::Display for AdvMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AdvMode::Minimax => "minimax",
            AdvMode::Nonsaturating => "nonsaturating",
            AdvMode::LeastSquares => "least-squares",
        })
    }
}

impl std::str::FromStr for AdvMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "minimax" => Ok(AdvMode::Minimax),
            "nonsaturating" => Ok(AdvMode::Nonsaturating),
            "least-squares" => Ok(AdvMode::LeastSquares),
            other => Err(format!("unknown adversarial mode `{other}`")),
        }
    }
}

/// A network together with its parameters attached to a graph.
#[derive(Clone, Copy, Debug)]
pub struct Bound<'a> {
    pub net: &'a Network,
    pub params: &'a [Var],
}

impl<'a> Bound<'a> {
    pub fn new(net: &'a Network, params: &'a [Var]) -> Self {
        Self { net, params }
    }
}

/// Anything that maps a graph node to another, such as a bound network.
pub trait Mapping {
    fn apply<T: Scalar>(&self, g: &mut Graph<T>, x: Var) -> Result<Var>;
}

impl Mapping for Bound<'_> {
    fn apply<T: Scalar>(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        self.net.forward(g, self.params, x)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CycleTerms {
    /// `F(x)`
    pub fake_y: Var,
    /// `G(y)`
    pub fake_x: Var,
    pub loss: Var,
}

/// `mean|G(F(x)) - x| + mean|F(G(y)) - y|`.
pub fn cycle_loss<T: Scalar>(g: &mut Graph<T>, x: Var, y: Var, f: &impl Mapping, gen: &impl Mapping) -> Result<CycleTerms> {
    let fake_y = f.apply(g, x)?;
    let rec_x = gen.apply(g, fake_y)?;
    let fake_x = gen.apply(g, y)?;
    let rec_y = f.apply(g, fake_x)?;
    let a = g.l1_mean(rec_x, x)?;
    let b = g.l1_mean(rec_y, y)?;
    let loss = g.add(a, b)?;
    Ok(CycleTerms { fake_y, fake_x, loss })
}

/// Raw discriminator score maps for the four real/fake inputs.
#[derive(Clone, Copy, Debug)]
pub struct DiscScores {
    /// `D_X(x)`
    pub real_x: Var,
    /// `D_X(G(y))`
    pub fake_x: Var,
    /// `D_Y(y)`
    pub real_y: Var,
    /// `D_Y(F(x))`
    pub fake_y: Var,
}

impl DiscScores {
    pub fn compute<T: Scalar>(
        g: &mut Graph<T>,
        d_x: &impl Mapping,
        d_y: &impl Mapping,
        x: Var,
        fake_x: Var,
        y: Var,
        fake_y: Var,
    ) -> Result<Self> {
        Ok(Self {
            real_x: d_x.apply(g, x)?,
            fake_x: d_x.apply(g, fake_x)?,
            real_y: d_y.apply(g, y)?,
            fake_y: d_y.apply(g, fake_y)?,
        })
    }
}

/// `mean ln(sigmoid(s))` or, with `complement`, `mean ln(1 - sigmoid(s))`.
fn mean_log_prob<T: Scalar>(g: &mut Graph<T>, scores: Var, complement: bool) -> Result<Var> {
    let mut p = g.sigmoid(scores)?;
    if complement {
        p = g.affine(p, -1.0, 1.0)?;
    }
    let l = g.log_clamped(p, LOG_FLOOR)?;
    g.mean(l)
}

/// The discriminators' objective (to be maximized) and the corresponding
/// loss (its negation).
#[derive(Clone, Copy, Debug)]
pub struct DiscTerms {
    pub objective: Var,
    pub loss: Var,
}

/// Discriminator side. In the sigmoid modes this is
/// `E ln D_X(x) + E ln(1 - D_Y(F(x))) + E ln(1 - D_X(G(y))) + E ln D_Y(y)`;
/// in least-squares mode the objective is minus the summed squared errors
/// against targets 1 (real) and 0 (fake).
pub fn discriminator_terms<T: Scalar>(g: &mut Graph<T>, s: &DiscScores, mode: AdvMode) -> Result<DiscTerms> {
    let objective = match mode {
        AdvMode::Minimax | AdvMode::Nonsaturating => {
            let terms = [
                mean_log_prob(g, s.real_x, false)?,
                mean_log_prob(g, s.fake_y, true)?,
                mean_log_prob(g, s.fake_x, true)?,
                mean_log_prob(g, s.real_y, false)?,
            ];
            g.add_all(&terms)?
        }
        AdvMode::LeastSquares => {
            let terms = [
                g.squared_error_mean(s.real_x, 1.0)?,
                g.squared_error_mean(s.fake_x, 0.0)?,
                g.squared_error_mean(s.real_y, 1.0)?,
                g.squared_error_mean(s.fake_y, 0.0)?,
            ];
            let total = g.add_all(&terms)?;
            g.affine(total, -1.0, 0.0)?
        }
    };
    let loss = g.affine(objective, -1.0, 0.0)?;
    Ok(DiscTerms { objective, loss })
}

/// Generator side, from the discriminator scores of the two fakes. In
/// minimax mode the real-data terms are omitted since they carry no
/// generator gradient.
pub fn generator_adv_loss<T: Scalar>(g: &mut Graph<T>, fake_x: Var, fake_y: Var, mode: AdvMode) -> Result<Var> {
    match mode {
        AdvMode::Minimax => {
            let a = mean_log_prob(g, fake_y, true)?;
            let b = mean_log_prob(g, fake_x, true)?;
            g.add(a, b)
        }
        AdvMode::Nonsaturating => {
            let a = mean_log_prob(g, fake_y, false)?;
            let b = mean_log_prob(g, fake_x, false)?;
            let sum = g.add(a, b)?;
            g.affine(sum, -1.0, 0.0)
        }
        AdvMode::LeastSquares => {
            let a = g.squared_error_mean(fake_y, 1.0)?;
            let b = g.squared_error_mean(fake_x, 1.0)?;
            g.add(a, b)
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct AdversarialTerms {
    pub scores: DiscScores,
    /// Maximized by the discriminators.
    pub disc_objective: Var,
    /// Minimized by the generators.
    pub gen_loss: Var,
}

/// Full adversarial computation in one graph: both generators, both
/// discriminators.
pub fn adversarial_loss<T: Scalar>(
    g: &mut Graph<T>,
    x: Var,
    y: Var,
    f: &impl Mapping,
    gen: &impl Mapping,
    d_x: &impl Mapping,
    d_y: &impl Mapping,
    mode: AdvMode,
) -> Result<AdversarialTerms> {
    let fake_y = f.apply(g, x)?;
    let fake_x = gen.apply(g, y)?;
    let scores = DiscScores::compute(g, d_x, d_y, x, fake_x, y, fake_y)?;
    let disc = discriminator_terms(g, &scores, mode)?;
    let gen_loss = generator_adv_loss(g, scores.fake_x, scores.fake_y, mode)?;
    Ok(AdversarialTerms {
        scores,
        disc_objective: disc.objective,
        gen_loss,
    })
}
