//! Experiment strategies behind the subcommands.
//!
//! Each experiment kind is a trait object in a fixed registry: the
//! subcommand looks up its strategy by name, the strategy validates the
//! configuration, drives the toolkit, and renders deterministic artifacts
//! entirely in memory.  Nothing here touches the filesystem — the caller
//! writes artifacts only after a run succeeds, which is what guarantees
//! that validation failures leave no partial outputs behind.

use quadflow_core::collision::collision_oracle;
use quadflow_core::control::{check_cost_equivalence, classical_lqr_check, optimality_probe};
use quadflow_core::flow::{flow_expectations, unitarity_residual};
use quadflow_core::ito::{
    flow_equation_text, unitarity_defect, verify_completion_of_squares, CoefficientShape,
    ItoTable,
};
use quadflow_core::operator::Operator;
use quadflow_core::riccati::{solve_auxiliary_ode, solve_riccati_ode, solve_stationary_are};
use quadflow_core::Error as CoreError;

use crate::config::{operator, ExperimentConfig};
use crate::report::{num, trajectory_csv, Artifact, Csv, TextReport};

/// Failure of a run, split by exit status: validation problems abort before
/// anything is written, numerical problems still get a diagnostic payload.
#[derive(Debug)]
pub enum RunError {
    Validation(String),
    Numerical(CoreError),
}

pub type RunResult<T> = Result<T, RunError>;

impl From<CoreError> for RunError {
    fn from(error: CoreError) -> RunError {
        match error {
            CoreError::BlowUp { .. }
            | CoreError::NewtonStagnation { .. }
            | CoreError::LostPositivity { .. }
            | CoreError::EigenFailed
            | CoreError::Singular { .. }
            | CoreError::SingularPencil { .. }
            | CoreError::ResidualBound { .. }
            | CoreError::ImaginaryResidue { .. }
            | CoreError::SymbolicResidual { .. } => RunError::Numerical(error),
            other => RunError::Validation(other.to_string()),
        }
    }
}

/// One experiment kind: a named strategy from configuration to artifacts.
pub trait Experiment: Sync {
    /// Subcommand name; must equal the config `kind`.
    fn kind(&self) -> &'static str;
    /// One-line description for listings.
    fn describe(&self) -> &'static str;
    /// Validate the configuration, compute, and render artifacts.
    fn run(&self, config: &ExperimentConfig) -> RunResult<Vec<Artifact>>;
}

static REGISTRY: [&(dyn Experiment + Sync); 7] = [
    &Derive,
    &SolveAre,
    &Riccati,
    &Simulate,
    &ProbeOptimality,
    &CostEquivalence,
    &ClassicalLqr,
];

pub fn registry() -> &'static [&'static (dyn Experiment + Sync)] {
    &REGISTRY
}

pub fn lookup(kind: &str) -> Option<&'static (dyn Experiment + Sync)> {
    registry().iter().copied().find(|e| e.kind() == kind)
}

// ---------------------------------------------------------------------------
// derive
// ---------------------------------------------------------------------------

struct Derive;

impl Experiment for Derive {
    fn kind(&self) -> &'static str {
        "derive"
    }

    fn describe(&self) -> &'static str {
        "symbolic derivation bundle: flow equation, unitarity defect, completion of squares"
    }

    fn run(&self, config: &ExperimentConfig) -> RunResult<Vec<Artifact>> {
        let table_name = config.table.as_deref().unwrap_or("boson-fock");
        if table_name != "boson-fock" {
            return Err(RunError::Validation(format!(
                "kind `derive` supports only the `boson-fock` table, got `{table_name}`"
            )));
        }
        let table = ItoTable::boson_fock();
        let flow_text = flow_equation_text(&table)?;

        let defect = unitarity_defect(&table)?;
        let mut report = TextReport::new("derivation report");
        report.field("table", table_name);
        report.field("unitarity_defect_terms", defect.term_count());
        report.field("unitarity_preserved", defect.is_zero());
        for (label, pair_table, shape) in [
            (
                "levy-pair-boson/general",
                ItoTable::levy_pair_boson(),
                CoefficientShape::General,
            ),
            (
                "levy-pair-boson/additive-noise",
                ItoTable::levy_pair_boson(),
                CoefficientShape::AdditiveNoise,
            ),
            (
                "no-noise/general",
                ItoTable::no_noise(),
                CoefficientShape::General,
            ),
            (
                "no-noise/additive-noise",
                ItoTable::no_noise(),
                CoefficientShape::AdditiveNoise,
            ),
        ] {
            let squares = verify_completion_of_squares(&pair_table, shape, false)?;
            report.field(
                &format!("squares {label} cancelled"),
                squares.cancelled(),
            );
            report.field(
                &format!("squares {label} residual_terms"),
                squares.term_count,
            );
        }
        Ok(vec![
            Artifact::text("flow_equation.txt", flow_text),
            report.into_artifact("derivation_report.txt"),
        ])
    }
}

// ---------------------------------------------------------------------------
// solve-are
// ---------------------------------------------------------------------------

struct SolveAre;

impl Experiment for SolveAre {
    fn kind(&self) -> &'static str {
        "solve-are"
    }

    fn describe(&self) -> &'static str {
        "stationary algebraic weight equation with the feasibility certificate"
    }

    fn run(&self, config: &ExperimentConfig) -> RunResult<Vec<Artifact>> {
        let model = config.require_model()?;
        let x = config.require_matrix(&config.x, "x")?;
        let tol = config.tolerance.unwrap_or(1e-10);
        let solution = solve_stationary_are(model.h(), &x, tol)?;

        let mut report = TextReport::new("stationary weight equation report");
        report.float("residual", solution.residual);
        report.float("trace_obstruction", solution.trace_obstruction);
        report.field("feasible", solution.feasible);
        report.field("iterations", solution.iterations);

        let mut csv = Csv::new(&["i", "j", "pi_re", "pi_im"]);
        let pi = solution.pi.mat();
        for i in 0..solution.pi.dim() {
            for j in 0..solution.pi.dim() {
                csv.row(&[
                    i.to_string(),
                    j.to_string(),
                    num(pi[(i, j)].re),
                    num(pi[(i, j)].im),
                ]);
            }
        }
        Ok(vec![
            report.into_artifact("are_report.txt"),
            csv.into_artifact("pi.csv"),
        ])
    }
}

// ---------------------------------------------------------------------------
// riccati
// ---------------------------------------------------------------------------

struct Riccati;

impl Experiment for Riccati {
    fn kind(&self) -> &'static str {
        "riccati"
    }

    fn describe(&self) -> &'static str {
        "backward weight and affine trajectories with solver diagnostics"
    }

    fn run(&self, config: &ExperimentConfig) -> RunResult<Vec<Artifact>> {
        let model = config.require_model()?;
        let cost = config.require_cost()?;
        let grid = config.require_grid(Some(model.t_end()))?;
        let mut trajectory = solve_riccati_ode(&model, &cost, &grid)?;
        if let Some(literal) = &config.affine_drift {
            let affine_drift = operator(literal)?;
            let affine = solve_auxiliary_ode(&model, &cost, &trajectory, &affine_drift, &grid)?;
            trajectory = trajectory.with_affine(affine)?;
        }

        let dim = model.dim();
        let mut csv = Csv::new(&["t", "i", "j", "pi_re", "pi_im", "r_re", "r_im"]);
        for (node, t) in grid.nodes().enumerate() {
            let pi = trajectory.pi(node).mat();
            let r = trajectory.r(node).mat();
            for i in 0..dim {
                for j in 0..dim {
                    csv.row(&[
                        num(t),
                        i.to_string(),
                        j.to_string(),
                        num(pi[(i, j)].re),
                        num(pi[(i, j)].im),
                        num(r[(i, j)].re),
                        num(r[(i, j)].im),
                    ]);
                }
            }
        }

        let diagnostics = trajectory.diagnostics();
        let mut report = TextReport::new("backward solve report");
        report.float("max_asymmetry", diagnostics.max_asymmetry);
        report.float("min_eigenvalue", diagnostics.min_eigenvalue);
        report.float("noise_residual_dA", diagnostics.noise_residual_da);
        report.float("noise_residual_dAdag", diagnostics.noise_residual_dadag);
        Ok(vec![
            csv.into_artifact("riccati.csv"),
            report.into_artifact("riccati_report.txt"),
        ])
    }
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct Simulate;

impl Experiment for Simulate {
    fn kind(&self) -> &'static str {
        "simulate"
    }

    fn describe(&self) -> &'static str {
        "flow expectations with optional collision-model cross-check"
    }

    fn run(&self, config: &ExperimentConfig) -> RunResult<Vec<Artifact>> {
        let model = config.require_model()?;
        let state = config.require_state()?;
        let grid = config.require_grid(Some(model.t_end()))?;
        let literals = config
            .observables
            .as_ref()
            .filter(|v| !v.is_empty())
            .ok_or_else(|| {
                RunError::Validation(
                    "kind `simulate` requires a non-empty `observables` list".into(),
                )
            })?;
        let observables = literals
            .iter()
            .map(|l| operator(l))
            .collect::<RunResult<Vec<Operator>>>()?;

        let trajectories = flow_expectations(&model, &state, &observables, &grid)?;
        let mut artifacts = vec![trajectory_csv(
            "trajectory.csv",
            &grid,
            observables.len(),
            |obs, node| trajectories.value(obs, node),
        )];

        let mut report = TextReport::new("simulation report");
        report.field("observables", observables.len());
        if model.is_unitary_form() {
            let unitarity = unitarity_residual(&model, &state, &grid)?;
            report.float("identity_residual", unitarity.identity_residual);
            report.float("hermiticity_residual", unitarity.hermiticity_residual);
        }
        if let Some(levels) = config.collision_truncation {
            let run = collision_oracle(&model, &state, &observables, &grid, levels)?;
            artifacts.push(trajectory_csv(
                "collision.csv",
                &grid,
                observables.len(),
                |obs, node| run.trajectories.value(obs, node),
            ));
            report.field("collision_truncation", levels);
            report.float(
                "collision_max_deviation",
                trajectories.max_deviation(&run.trajectories)?,
            );
            report.float("collision_max_leakage", run.max_leakage);
            report.field("collision_leakage_warning", run.leakage_warning);
        }
        artifacts.push(report.into_artifact("simulation_report.txt"));
        Ok(artifacts)
    }
}

// ---------------------------------------------------------------------------
// probe-optimality
// ---------------------------------------------------------------------------

struct ProbeOptimality;

impl Experiment for ProbeOptimality {
    fn kind(&self) -> &'static str {
        "probe-optimality"
    }

    fn describe(&self) -> &'static str {
        "synthesize the optimal gain and measure cost excess under displacements"
    }

    fn run(&self, config: &ExperimentConfig) -> RunResult<Vec<Artifact>> {
        let model = config.require_model()?;
        let state = config.require_state()?;
        let grid = config.require_grid(Some(model.t_end()))?;
        let x = config.require_matrix(&config.x, "x")?;
        let m = match &config.terminal_weight {
            Some(literal) => operator(literal)?,
            None => Operator::zeros(model.dim()),
        };
        let epsilons = config
            .epsilons
            .clone()
            .unwrap_or_else(|| vec![0.1, 0.03, 0.01]);
        let trials = config.trials.unwrap_or(4);
        let probe = optimality_probe(
            &model,
            &x,
            &m,
            &state,
            &grid,
            &epsilons,
            trials,
            config.seed,
        )?;

        let mut csv = Csv::new(&["trial", "epsilon", "gap"]);
        for sample in &probe.samples {
            csv.row(&[
                sample.trial.to_string(),
                num(sample.epsilon),
                num(sample.gap),
            ]);
        }

        let mut report = TextReport::new("optimality probe report");
        report.float("j_opt", probe.j_opt);
        report.float("min_value_prediction", probe.min_value_prediction);
        report.float("prediction_gap", probe.prediction_gap);
        report.float("min_gap", probe.min_gap);
        report.float("gap_slope", probe.gap_slope);
        Ok(vec![
            csv.into_artifact("probe.csv"),
            report.into_artifact("probe_report.txt"),
        ])
    }
}

// ---------------------------------------------------------------------------
// cost-equivalence
// ---------------------------------------------------------------------------

struct CostEquivalence;

impl Experiment for CostEquivalence {
    fn kind(&self) -> &'static str {
        "cost-equivalence"
    }

    fn describe(&self) -> &'static str {
        "evaluate one control cost along three independently assembled routes"
    }

    fn run(&self, config: &ExperimentConfig) -> RunResult<Vec<Artifact>> {
        let model = config.require_model()?;
        let state = config.require_state()?;
        let grid = config.require_grid(Some(model.t_end()))?;
        let x = config.require_matrix(&config.x, "x")?;
        let equivalence = check_cost_equivalence(&model, &x, &state, &grid)?;

        let mut report = TextReport::new("cost equivalence report");
        report.float("j_hat", equivalence.j_hat);
        report.float("j", equivalence.j);
        report.float("j_tilde", equivalence.j_tilde);
        report.float("max_deviation", equivalence.max_deviation);
        Ok(vec![report.into_artifact("equivalence_report.txt")])
    }
}

// ---------------------------------------------------------------------------
// classical-lqr
// ---------------------------------------------------------------------------

struct ClassicalLqr;

impl Experiment for ClassicalLqr {
    fn kind(&self) -> &'static str {
        "classical-lqr"
    }

    fn describe(&self) -> &'static str {
        "noise-free regulator feedback versus the discretized program oracle"
    }

    fn run(&self, config: &ExperimentConfig) -> RunResult<Vec<Artifact>> {
        let f = config.require_matrix(&config.f, "f")?;
        let g = config.require_matrix(&config.g, "g")?;
        let cost = config.require_cost()?;
        let affine_drift = match &config.affine_drift {
            Some(literal) => operator(literal)?,
            None => Operator::zeros(cost.dim()),
        };
        let grid = config.require_grid(None)?;
        let comparison = classical_lqr_check(&f, &g, &affine_drift, &cost, &grid, config.seed)?;

        let mut report = TextReport::new("regulator comparison report");
        report.float("cost_feedback", comparison.cost_feedback);
        report.float("cost_oracle", comparison.cost_oracle);
        report.float("relative_gap", comparison.relative_gap);
        report.float("zero_control_cost", comparison.zero_control_cost);
        report.float("kkt_residual", comparison.kkt_residual);
        Ok(vec![report.into_artifact("lqr_report.txt")])
    }
}
