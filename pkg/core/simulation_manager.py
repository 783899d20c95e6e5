"""
Simulation Manager - Handles run sessions and deterministic result export
"""

import csv
import json
from fractions import Fraction

import numpy as np

from core import __version__
from core.errors import ReportIoError
from utils.helper import ensure_parent_dir, format_number


class SimulationEncoder(json.JSONEncoder):
    """Custom JSON encoder for simulation data"""
    def default(self, obj):
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        if isinstance(obj, np.integer):
            return int(obj)
        if isinstance(obj, np.floating):
            return float(obj)
        if isinstance(obj, np.bool_):
            return bool(obj)
        if isinstance(obj, Fraction):
            return str(obj)
        return super().default(obj)


class SimulationManager:
    """Collects the series and summary of a run and writes them out"""

    def __init__(self):
        self.history = []  # finished sessions
        self.current_session = None

    def start_session(self, mode, scenario):
        """Start a new run session"""
        self.current_session = {
            'mode': mode,
            'scenario': scenario.name,
            'scenario_hash': scenario.hash,
            'columns': (),
            'rows': [],
            'summary': {},
        }

    def add_result(self, result):
        """Attach a worker result to the current session"""
        if self.current_session is None:
            return
        self.current_session['summary'].update(result.get('summary', {}))
        if 'rows' in result:
            self.current_session['columns'] = tuple(result['columns'])
            self.current_session['rows'].extend(result['rows'])

    def end_session(self):
        """End current session and add to history"""
        if self.current_session is None:
            return
        self.history.append(self.current_session)
        self.current_session = None

    def last_session(self):
        return self.history[-1] if self.history else None

    def payload(self, session=None):
        """JSON document of a session: summary plus tool version and scenario hash"""
        session = session or self.last_session()
        if session is None:
            return {}
        document = dict(session['summary'])
        document['command'] = session['mode']
        document['scenario'] = session['scenario']
        document['scenario_hash'] = session['scenario_hash']
        document['version'] = __version__
        return document

    def to_json(self, session=None):
        return json.dumps(self.payload(session), indent=2, sort_keys=True, ensure_ascii=False,
                          cls=SimulationEncoder) + "\n"

    def export_to_json(self, filepath, session=None):
        """Export a session summary to a JSON file"""
        ensure_parent_dir(filepath)
        try:
            with open(filepath, 'w', encoding='utf-8', newline='\n') as f:
                f.write(self.to_json(session))
        except OSError as e:
            raise ReportIoError(f"Cannot write {filepath}: {e.strerror}")

    def export_to_csv(self, filepath, session=None):
        """Export a session's time series to CSV"""
        session = session or self.last_session()
        if session is None or not session['columns']:
            raise ReportIoError("Nothing to export: the run produced no time series")
        ensure_parent_dir(filepath)
        try:
            with open(filepath, 'w', newline='', encoding='utf-8') as f:
                writer = csv.writer(f, lineterminator='\n')
                writer.writerow(session['columns'])
                for row in session['rows']:
                    writer.writerow([
                        format_number(value) if isinstance(value, float) else value
                        for value in row
                    ])
        except OSError as e:
            raise ReportIoError(f"Cannot write {filepath}: {e.strerror}")
