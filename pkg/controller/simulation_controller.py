# controller/simulation_controller.py
from flask import request, jsonify

from config.settings import SimulatorSettings
from controller.experiment_controller import ExperimentController

# CLI exit code -> HTTP status
EXIT_CODE_STATUS = {
    0: 200,
    1: 400,
    2: 422,
    3: 500,
    4: 409,
}


class SimulationController:
    def __init__(self, settings: SimulatorSettings = None):
        self.experiments = ExperimentController(settings)

    @staticmethod
    def _respond(payload, exit_code):
        return jsonify(payload), EXIT_CODE_STATUS.get(exit_code, 500)

    @staticmethod
    def _read_json():
        """Request body as a dict, or an error response"""
        if not request.is_json:
            return None, (jsonify({
                'error': 'Content-Type must be application/json',
                'code': 'INVALID_CONTENT_TYPE'
            }), 400)
        data = request.get_json(silent=True)
        if data is None:
            data = {}
        if not isinstance(data, dict):
            return None, (jsonify({
                'error': 'Request body must be a JSON object',
                'code': 'VALIDATION_ERROR'
            }), 400)
        config = data.get('config')
        if config is not None and not isinstance(config, dict):
            return None, (jsonify({
                'error': "'config' must be an inline experiment config object",
                'code': 'VALIDATION_ERROR'
            }), 400)
        return data, None

    def run_state(self):
        """
        Run a sequence script from equilibrium

        Expected JSON payload:
        {
            "config": {...},                 // optional, bundled TCE config when missing
            "script": "pulse x pi/2 on 1",   // optional script text
            "builtin": "prep"                // optional, used when script is missing
        }

        Returns:
            tuple: (response_data, status_code)
        """
        data, error = self._read_json()
        if error:
            return error

        script = data.get('script')
        builtin = data.get('builtin')
        if script is not None and not isinstance(script, str):
            return jsonify({'error': "'script' must be a string", 'code': 'VALIDATION_ERROR'}), 400
        if builtin is not None and not isinstance(builtin, str):
            return jsonify({'error': "'builtin' must be a string", 'code': 'VALIDATION_ERROR'}), 400
        # Script files are never read on behalf of HTTP clients
        script_path = None if script is not None else f"builtin:{builtin or 'prep'}"

        payload, code = self.experiments.state(data.get('config'), script_path=script_path,
                                               script_text=script, write_files=False)
        return self._respond(payload, code)

    def run_scan(self):
        """
        Decoherence scan with cosine fit

        Expected JSON payload:
        {
            "config": {...},        // optional
            "mode": "real",         // optional, "real" or "magnitude"
            "window": "530:580",    // optional, Hz
            "jobs": 2               // optional
        }
        """
        data, error = self._read_json()
        if error:
            return error

        jobs = data.get('jobs')
        if jobs is not None and (not isinstance(jobs, int) or isinstance(jobs, bool) or jobs < 1):
            return jsonify({'error': "'jobs' must be a positive integer", 'code': 'VALIDATION_ERROR'}), 400

        payload, code = self.experiments.scan(data.get('config'), jobs=jobs, mode=data.get('mode'),
                                              window=data.get('window'), write_files=False)
        return self._respond(payload, code)

    def run_spectrum(self):
        """
        Spectrum after readout at evolution time t (seconds)

        Expected JSON payload:
        {
            "t": 0.0035,
            "config": {...},        // optional
            "mode": "magnitude",    // optional
            "window": [530, 580]    // optional
        }
        """
        data, error = self._read_json()
        if error:
            return error

        t = data.get('t')
        if isinstance(t, bool) or not isinstance(t, (int, float)):
            return jsonify({'error': "'t' (seconds) is required and must be a number",
                            'code': 'VALIDATION_ERROR'}), 400

        payload, code = self.experiments.spectrum(data.get('config'), t=t, mode=data.get('mode'),
                                                  window=data.get('window'), write_files=False)
        return self._respond(payload, code)

    def run_verify(self):
        """Property suite; 409 when a check fails"""
        data, error = self._read_json()
        if error:
            return error

        payload, code = self.experiments.verify(data.get('config'))
        return self._respond(payload, code)
