"""
Test script for the experiment service API.
This script tests the API endpoints through Flask's test client.
"""

import os
import sys
import unittest

# Add the parent directory to the path to import config and modules
sys.path.append(os.path.dirname(os.path.abspath(__file__)))
from app.main import app, configure_app


class TestExperimentServiceAPI(unittest.TestCase):
    """Test cases for the Experiment Service API."""

    @classmethod
    def setUpClass(cls):
        """Set up the test class with the production configuration."""
        configure_app(allow_selftest=False)
        app.config['TESTING'] = True
        cls.client = app.test_client()

    def test_commands_endpoint(self):
        """Test the /commands endpoint."""
        response = self.client.get('/commands')
        self.assertEqual(response.status_code, 200)

        data = response.get_json()
        self.assertIn('commands', data)
        names = [command['name'] for command in data['commands']]
        self.assertIn('density', names)
        self.assertIn('converge', names)
        self.assertNotIn('selftest', names)

        density = next(command for command in data['commands'] if command['name'] == 'density')
        self.assertEqual(density['defaults']['set'], 'even')

    def test_run_density(self):
        """Test the /run endpoint with the density command."""
        response = self.client.get('/run?command=density&set=even&N=1000&seed=3')
        self.assertEqual(response.status_code, 200)

        data = response.get_json()
        self.assertEqual(data['command'], 'density')
        self.assertEqual(data['seed'], 3)
        self.assertIsInstance(data['rows'], list)

        final = data['rows'][-1]
        self.assertEqual(final['metric'], 'density')
        self.assertEqual(final['value'], 0.5)
        self.assertEqual(final['params']['N'], 1000)

    def test_run_green(self):
        """Test the /run endpoint with the green command."""
        response = self.client.get('/run', query_string={'command': 'green', 'field': 'xy', 'P': '0.1,0.2,0'})
        self.assertEqual(response.status_code, 200)

        metrics = {row['metric']: row['value'] for row in response.get_json()['rows']}
        self.assertAlmostEqual(metrics['total'], 0.02, places=4)
        self.assertEqual(metrics['near_boundary'], 0)

    def test_run_is_repeatable(self):
        """Test that the same query gives the same rows."""
        url = '/run?command=section-mean&functional=cos&n=10,100&method=monte-carlo&samples=2000&seed=9'
        first = self.client.get(url).get_json()
        second = self.client.get(url).get_json()
        self.assertEqual(first['rows'], second['rows'])

    def test_missing_command(self):
        """Test the /run endpoint without a command."""
        response = self.client.get('/run')
        self.assertEqual(response.status_code, 400)
        self.assertIn('error', response.get_json())

    def test_unknown_parameter(self):
        """Test the /run endpoint with a parameter the command does not take."""
        response = self.client.get('/run?command=density&sett=even')
        self.assertEqual(response.status_code, 400)
        self.assertIn("did you mean 'set'", response.get_json()['error'])

    def test_bad_predicate(self):
        """Test the /run endpoint with an unknown integer set."""
        response = self.client.get('/run?command=density&set=prime')
        self.assertEqual(response.status_code, 400)

    def test_unknown_command(self):
        """Test the /run endpoint with an unknown command."""
        response = self.client.get('/run?command=integrate')
        self.assertEqual(response.status_code, 400)

    def test_selftest_blocked(self):
        """Test that the selftest command is refused over the API."""
        response = self.client.get('/run?command=selftest')
        self.assertEqual(response.status_code, 400)

    def test_numeric_failure(self):
        """Test that a failed simulation returns a server error."""
        response = self.client.get('/run?command=passage&n=10&reps=100&dt=0.001&horizon=0.001')
        self.assertEqual(response.status_code, 500)
        self.assertIn('censored', response.get_json()['error'])


if __name__ == '__main__':
    unittest.main()
