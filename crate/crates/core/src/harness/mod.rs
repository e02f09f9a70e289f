//! Ensembles, experiment orchestration, OOD evaluation and reports.

pub mod baseline;
pub mod ensemble;
pub mod experiment;
pub mod model;

pub use baseline::{dc_params_csv, run_baseline, BaselineMethod, BaselineOutput, BaselineSettings};
pub use ensemble::{
    average_predictions, ensemble_predict, evaluate_members, score, train_ensemble, EnsembleEval, EnsembleResult,
    Member, MemberFailure, DEFAULT_SEEDS,
};
pub use experiment::{
    load_config, obtain_dataset, preset_sizes, run_matrix, run_ood, train_cached, window_sweep_specs, CellReport,
    CellStatus, ExperimentConfig, LayoutTable, MatrixReport, OodReport, OodRow, OUTPUT_DIR_ENV,
};
pub use model::{load_model, save_model, AnyModel, ModelSpec};
