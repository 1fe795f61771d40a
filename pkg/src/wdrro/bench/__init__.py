"""Experiment harness: scenarios, sweeps, tables, heatmaps and the CLI."""

from .scenarios import (
    PRESETS,
    HeatmapCell,
    ScenarioConfig,
    build_two_item_loss,
    gaussian_expected_profit,
    generate_samples,
    heatmap_erm_vs_dro,
    scenario_loss,
    scenario_sets,
    two_item_loss_direct,
)
from .sweep import (
    METHODS,
    SweepContext,
    SweepRow,
    TableRow,
    performance_table,
    read_heatmap_csv,
    read_sweep_csv,
    read_table_csv,
    run_sweep,
    write_heatmap_csv,
    write_sweep_csv,
    write_table_csv,
)

__all__ = [
    "PRESETS", "HeatmapCell", "ScenarioConfig", "build_two_item_loss", "gaussian_expected_profit",
    "generate_samples", "heatmap_erm_vs_dro", "scenario_loss", "scenario_sets", "two_item_loss_direct",
    "METHODS", "SweepContext", "SweepRow", "TableRow", "performance_table", "read_heatmap_csv",
    "read_sweep_csv", "read_table_csv", "run_sweep", "write_heatmap_csv", "write_sweep_csv",
    "write_table_csv",
]
