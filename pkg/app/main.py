"""
Main API entry point for the experiment service.
Provides GET endpoints listing the commands and running one of them.
"""

import os
import sys
import logging
import argparse
from flask import Flask, request, jsonify
from flask_cors import CORS

# Add the parent directory to the path to import config and modules
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
import config
from modules.errors_module import DomainError, UsageError
from modules.harness_module import COMMANDS, config_from_mapping, execute, parse_scalar

# Configure logging
os.makedirs(os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), config.LOG_DIR), exist_ok=True)
logging.basicConfig(
    filename=os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), config.LOG_DIR, 'api.log'),
    level=getattr(logging, config.LOG_LEVEL),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

# Initialize Flask app
app = Flask(__name__)
# Enable CORS for all routes
CORS(app)

# Commands the API refuses to run
app.config['BLOCKED_COMMANDS'] = set()


@app.route('/commands', methods=['GET'])
def commands():
    """
    GET endpoint listing the available commands.

    Returns:
        JSON response with each command's description and default parameters
    """
    return jsonify({
        'commands': [
            {'name': name, 'description': spec.description, 'defaults': spec.defaults}
            for name, spec in COMMANDS.items()
            if name not in app.config['BLOCKED_COMMANDS']
        ]
    })


@app.route('/run', methods=['GET'])
def run_command():
    """
    GET endpoint running one command.

    Query parameters:
    - command: Command name (required)
    - seed, samples, workers: Optional run settings
    - any parameter of the command, e.g. N=1000 for density

    Returns:
        JSON response with the command, seed and report rows
    """
    try:
        command = request.args.get('command', '')
        if not command:
            return jsonify({
                'error': 'Missing required parameter: command'
            }), 400
        if command in app.config['BLOCKED_COMMANDS']:
            return jsonify({
                'error': f"Command '{command}' is not available over the API"
            }), 400

        entries = {key: parse_scalar(value) for key, value in request.args.items()
                   if key not in ('command', 'out', 'format', 'timings')}
        run_config = config_from_mapping(entries, command, source="query")
        rows = execute(run_config)

        return jsonify({
            'command': command,
            'seed': run_config.resolved_seed,
            'rows': [row.to_dict() for row in rows]
        })

    except (UsageError, DomainError) as e:
        logger.error(f"Bad request: {str(e)}")
        return jsonify({
            'error': str(e)
        }), 400
    except Exception as e:
        logger.error(f"Error running command: {str(e)}")
        return jsonify({
            'error': f"Error running command: {str(e)}"
        }), 500


# This function can be called to configure the app for Gunicorn
def configure_app(allow_selftest=False):
    """Configure the application for production use."""
    if allow_selftest:
        app.config['BLOCKED_COMMANDS'] = set()
    else:
        app.config['BLOCKED_COMMANDS'] = {'selftest'}
    logger.info(f"API configured; blocked commands: {sorted(app.config['BLOCKED_COMMANDS'])}")
    return app


# When running directly, this will be executed
if __name__ == '__main__':
    # Parse command line arguments
    parser = argparse.ArgumentParser(description='Experiment Service API')
    parser.add_argument('--allow-selftest', action='store_true',
                        help='Allow the selftest command over HTTP')
    args = parser.parse_args()

    # Configure the app
    configure_app(allow_selftest=args.allow_selftest)

    # Run the Flask app
    app.run(
        host=config.API_HOST,
        port=config.API_PORT,
        debug=config.API_DEBUG
    )
