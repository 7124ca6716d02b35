//! Riemannian geometry of token-embedding manifolds.
//!
//! * [`manifold`]: kernel-density conformal metric, analytic test metrics,
//!   Christoffel symbols and curvature.
//! * [`geodesic`]: RK4 geodesic integration with optional forcing, path
//!   length/energy and shooting between points.
//! * [`cognition`]: sampling, attention, prediction, prediction error and the
//!   feedback-forced consciousness cycle.
//! * [`mind`]: thought flows, competition, learning, features and field analysis.
//! * [`io`] and [`cli`]: file formats and the `geomind` command line.

pub mod cli;
pub mod cognition;
pub mod error;
pub mod geodesic;
pub mod io;
pub mod manifold;
pub mod mind;

pub use cognition::{
    attention_weights, context_vector, cycle_step, feedback_forcing, perceive, predict_contextual,
    predict_geometric, prediction_error, sample_embedding, ActivationFn, CognitionParams,
    ErrorHistory, FeedbackFn, MindState, Predictor, SampledEmbedding,
};
pub use error::{GeoError, Result};
pub use geodesic::{
    geodesic_between, geodesic_step, integrate_geodesic, path_length_energy, Activation,
    ConstantForcing, Forcing, GeodesicState, ShootingOptions, Trajectory, ZeroForcing,
};
pub use manifold::{
    christoffel_at, christoffel_numeric, curvature_at, density_at, metric_at, ChristoffelSymbols,
    CurvatureReport, MetricSource, MetricTensor, TokenEmbedding, TokenField,
};
pub use mind::{
    analyze_field, feature_vector, learn_update, manipulate_feature, nearest_token,
    run_learning, run_thought_flow, score_flow, select_conscious, FieldReport, FlowConfig,
    GridSpec, InputSchedule, MetricChoice, Selection, ThoughtFlow,
};
