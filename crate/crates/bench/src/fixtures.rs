//! Model lookup: the built-in matrix game or a `.dpomdp` file.

use std::path::{Path, PathBuf};

use rscpi::model::{matrix_game_model, DecPomdpModel, InitialObservation};
use rscpi::parser::{load_dpomdp, DpomdpError, ParseDiagnostic};

/// Name accepted by `--model` for the two-player coordination game.
pub const MATRIX_GAME: &str = "matrix-game";

/// Shared payoffs of the coordination game: `(a¹, a²)` pays 2, `(b¹, b²)`
/// pays 6 and miscoordination costs 10.
pub fn matrix_game_payoffs() -> Vec<Vec<f64>> {
    vec![vec![2.0, -10.0], vec![-10.0, 6.0]]
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelSource {
    MatrixGame,
    File(PathBuf),
}

impl ModelSource {
    pub fn parse(name: &str) -> Self {
        if name == MATRIX_GAME {
            ModelSource::MatrixGame
        } else {
            ModelSource::File(PathBuf::from(name))
        }
    }

    /// Environment label used in run records.
    pub fn env_name(&self) -> String {
        match self {
            ModelSource::MatrixGame => MATRIX_GAME.to_string(),
            ModelSource::File(p) => p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.display().to_string()),
        }
    }

    pub fn display(&self) -> String {
        match self {
            ModelSource::MatrixGame => MATRIX_GAME.to_string(),
            ModelSource::File(p) => p.display().to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub model: DecPomdpModel,
    pub warnings: Vec<ParseDiagnostic>,
}

/// Loads the model for a given horizon. The matrix game is a one-step game;
/// other horizons repeat it.
pub fn load_model(
    source: &ModelSource,
    horizon: usize,
    mode: InitialObservation,
) -> Result<LoadedModel, DpomdpError> {
    match source {
        ModelSource::MatrixGame => {
            let model = matrix_game_model(&matrix_game_payoffs()).expect("fixture is well formed");
            Ok(LoadedModel {
                model: model.with_horizon(horizon.max(1)),
                warnings: Vec::new(),
            })
        }
        ModelSource::File(path) => load_file(path, horizon, mode),
    }
}

fn load_file(path: &Path, horizon: usize, mode: InitialObservation) -> Result<LoadedModel, DpomdpError> {
    let compiled = load_dpomdp(path, horizon, mode)?;
    Ok(LoadedModel {
        model: compiled.model,
        warnings: compiled.warnings,
    })
}
