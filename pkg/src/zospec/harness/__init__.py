"""Model problems, experiments, configuration, acceptance checks and the CLI."""

from .experiment import ExperimentReport, run_experiment
from .models import ModelProblem, build_scalar_model, build_schrodinger_model, build_vector_model
from .verify import verify_suite
