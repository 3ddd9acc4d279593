"""Regressors for the p50 stopped-time target."""
from .estimators import (
    FAMILIES,
    GbtRegressor,
    KnnRegressor,
    LinearRegressor,
    default_params,
    estimator_from_model,
    make_estimator,
    model_from_dict,
    model_to_dict,
)
from .gbt import GbtEnsemble, RegressionTree, gbt_feature_importance, gbt_fit, gbt_predict
from .knn import KDTree, KnnModel, knn_fit, knn_predict
from .linear import (
    LinearModel,
    fit_huber,
    fit_ols,
    huber_gradient,
    huber_objective,
    linear_predict,
    stepwise_select,
)

__all__ = [
    "FAMILIES", "GbtRegressor", "KnnRegressor", "LinearRegressor", "default_params",
    "estimator_from_model", "make_estimator", "model_from_dict", "model_to_dict",
    "GbtEnsemble", "RegressionTree", "gbt_feature_importance", "gbt_fit", "gbt_predict",
    "KDTree", "KnnModel", "knn_fit", "knn_predict",
    "LinearModel", "fit_huber", "fit_ols", "huber_gradient", "huber_objective",
    "linear_predict", "stepwise_select",
]
