"""Block-sparse spatio-temporal wind speed forecasting."""
from .dataset import Dataset, StationMeta, concat, ingest_csv, slice_dataset, write_csv
from .design import BlockLayout, DesignSystem, build_nonuniform, build_uniform, predict_row
from .forecast import ForecastConfig, ForecastRun, Method, backtest, parse_method
from .metrics import EvaluationReport, mae, nrmse, reduction, rmse
from .orders import CorrelationProfile, correlate, select_orders, tune_orders
from .solver import SolverConfig, SparseCoefficients, bomp, exhaustive_oracle, least_squares
from .synth import PlantedModel, plant, simulate

__version__ = "0.1.0"
