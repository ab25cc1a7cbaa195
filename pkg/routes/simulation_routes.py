# routes/simulation_routes.py
from flask import Blueprint
from controller.simulation_controller import SimulationController

# Create blueprint
simulation_bp = Blueprint('simulation', __name__, url_prefix='/api/simulations')

# Initialize controller
simulation_controller = SimulationController()

# Define simulation routes
@simulation_bp.route('/state', methods=['POST'])
def run_state():
    """Run a sequence script and return the final state endpoint"""
    return simulation_controller.run_state()

@simulation_bp.route('/scan', methods=['POST'])
def run_scan():
    """Decoherence scan with cosine fit endpoint"""
    return simulation_controller.run_scan()

@simulation_bp.route('/spectrum', methods=['POST'])
def run_spectrum():
    """Spectrum at one evolution time endpoint"""
    return simulation_controller.run_spectrum()

@simulation_bp.route('/verify', methods=['POST'])
def run_verify():
    """Property suite endpoint"""
    return simulation_controller.run_verify()

# Error handlers for the simulation blueprint
@simulation_bp.errorhandler(404)
def simulation_not_found(error):
    """Handle simulation endpoint not found error"""
    return {
        'error': 'Simulation endpoint not found',
        'code': 'SIMULATION_ENDPOINT_NOT_FOUND'
    }, 404

@simulation_bp.errorhandler(405)
def method_not_allowed(error):
    """Handle method not allowed error"""
    return {
        'error': 'Method not allowed for simulation endpoint',
        'code': 'SIMULATION_METHOD_NOT_ALLOWED'
    }, 405
