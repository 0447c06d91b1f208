//! Evaluation bench for the anonymization pipeline: the scoring protocol
//! (targeted / untargeted success rates and distortion), white-box attacks,
//! and report emission.

pub mod attack;
pub mod error;
pub mod protocol;
pub mod report;

pub use attack::{
    AttackConfig, AttackKind, AttackProxy, ClassifierProxy, DDN_GAMMA_DEFAULT, DDN_STEPS_DEFAULT,
    EPSILON_DEFAULT, EvaluatorProxy, PGD_ALPHA_DEFAULT, PGD_STEPS_DEFAULT, attack_ddn,
    attack_fgsm, attack_pgd, ddn_radius, run_attack,
};
pub use error::{BenchError, Result};
pub use protocol::{
    PSNR_CAP_DB, PairOutcome, ScoringClassifier, evaluate_anonymizer, success_rates,
};
pub use report::{Distribution, EvalRow, Overlap, emit_report, read_report, render_table};
