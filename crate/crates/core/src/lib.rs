//! Aspiration-weighted Luce choice.
//!
//! A decision maker choosing from a feasible set `S` mixes a Luce rule `p0`
//! with an influencer's exposure `q` at weight `α` and redraws infeasible
//! attempts:
//!
//! ```text
//! p(x | S) = [(1 − α) p0(x) + α q(x)] / [(1 − α) + α q_S]
//! ```
//!
//! - [`model`]: the closed-form rule and its mixture form.
//! - [`sim`]: seeded simulation under several failure rules.
//! - [`axioms`]: checks of the behavioral restrictions on choice data.
//! - [`ident`]: exact recovery of `(α, p0)` from population shares.
//! - [`gmm`]: minimum-distance and two-step GMM estimation from counts.
//! - [`io`]: the JSON dataset format shared with the `awlm` binary.
//!
//! ```
//! use awlm::ident::{recover_alpha_pair, ExposurePair};
//! use awlm::model::awlm_choice;
//! use awlm::Universe;
//!
//! let u = Universe::new(["a", "b", "c"])?;
//! let s = u.subset(&["a", "b"])?;
//! let p0 = u.dist(&[("a", 0.75), ("b", 0.25)])?;
//! let q1 = u.dist(&[("a", 0.2), ("b", 0.3), ("c", 0.5)])?;
//! let q2 = u.dist(&[("a", 0.4), ("b", 0.1), ("c", 0.5)])?;
//! let p1 = awlm_choice(&p0, &q1, 0.4, &s)?;
//! let p2 = awlm_choice(&p0, &q2, 0.4, &s)?;
//!
//! let pair = ExposurePair::new(q1, p1, q2, p2)?;
//! let alpha = recover_alpha_pair(&pair, 1e-12)?.alpha.unwrap();
//! assert!((alpha - 0.4).abs() < 1e-12);
//! # Ok::<(), awlm::AwlmError>(())
//! ```

pub mod axioms;
pub mod error;
pub mod gmm;
pub mod ident;
pub mod io;
pub mod linalg;
pub mod model;
pub mod sim;
pub mod simplex;
pub mod stats;
pub mod types;

pub use error::{AwlmError, Result};
pub use types::{AlternativeId, Dist, LuceWeights, MenuPair, ModelParams, Subset, Universe};
