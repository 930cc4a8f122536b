"""Single-track vehicle models and a conditional neural process for yaw-rate
prediction that stays robust under changing friction, load and vehicle."""

from .cnp import (CnpModel, GaussianPrediction, NormStats, aggregate, backward,
                  decode, encode_context, gaussian_nll, load_checkpoint, predict,
                  predict_arrays, save_checkpoint)
from .dynamics import (ControlInput, StateDerivative, TireForces, VehicleState,
                       cornering_stiffness, dst_derivative, kst_derivative,
                       kst_yaw_rate, longitudinal_slip, low_speed_blend,
                       model_derivative, pacejka_combined, slip_angles,
                       std_derivative, tire_contact_velocities, tire_forces,
                       vertical_forces)
from .evaluation import (EvalReport, band_coverage, physical_predict, rmse,
                         run_friction_experiment, run_mass_experiment,
                         run_scenario_experiment, run_vehicle_experiment)
from .network import AdamState, Mlp, adam_step
from .params import (BUNDLED_VEHICLES, DEFAULT_VEHICLE, PacejkaCoeffs,
                     VehicleParams, load_params, load_vehicle)
from .scenarios import (Scenario, TimeSeries, euler_step, holdout_profiles,
                        instantiate, instantiate_all, load_timeseries, rk4_step,
                        save_timeseries, scenario_catalog, simulate,
                        training_profiles)
from .tasks import (MetaDataset, TaskDataset, build_eval_task,
                    build_target_inputs, build_meta, load_meta,
                    sample_training_task, save_meta)
from .training import LossCurve, TrainConfig, train, validation_nll

__version__ = "0.1.0"
