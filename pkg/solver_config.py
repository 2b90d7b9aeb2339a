"""
Solver configuration for the forced-map workbench
Grid sizes, tolerances and output settings
"""

import os
from typing import Dict, Optional

from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


class SolverConfig:
    """Configuration read from the environment"""

    def __init__(self):
        self.diagnostic_grid = int(os.getenv('SNA_DIAGNOSTIC_GRID', '4096'))
        self.export_grid = int(os.getenv('SNA_EXPORT_GRID', '65536'))
        self.workers = int(os.getenv('SNA_WORKERS', '1'))
        self.output_dir = os.getenv('SNA_OUTPUT_DIR', 'runs')
        self.log_level = os.getenv('SNA_LOG_LEVEL', 'INFO').upper()
        self.database_url = os.getenv('DATABASE_URL', 'sqlite:///./sna_sweeps.db')
        # Fixed manifest timestamp for reproducible runs
        self.source_date_epoch = os.getenv('SOURCE_DATE_EPOCH')

        self.grids = {
            'diagnostic': self.diagnostic_grid,
            'export': self.export_grid,
            'bisection': 8192,
            'scan': 4096,
        }

        # Thresholds shared by the numerical modules
        self.tolerances = {
            'refine': float(os.getenv('SNA_REFINE_TOL', '1e-10')),
            'bisect': float(os.getenv('SNA_BISECT_TOL', '1e-12')),
            'zero': 1e-9,
            'psi_zero': 1e-13,
            'uniform': 1e-8,
            'degenerate': 1e-14,
            'determinant': 1e-12,
            'collision': 1e-9,
            'critical_snap': 1e-10,
        }

    def get_grid(self, purpose: str) -> int:
        """Get the default grid size for a purpose"""
        return self.grids.get(purpose, self.diagnostic_grid)

    def get_tolerance(self, name: str) -> float:
        """Get a named tolerance"""
        if name not in self.tolerances:
            raise KeyError(f"unknown tolerance '{name}'")
        return self.tolerances[name]

    def summary(self) -> Dict[str, Optional[str]]:
        return {
            'diagnostic_grid': str(self.diagnostic_grid),
            'export_grid': str(self.export_grid),
            'workers': str(self.workers),
            'output_dir': self.output_dir,
            'log_level': self.log_level,
        }


# Global config instance
solver_config = SolverConfig()
