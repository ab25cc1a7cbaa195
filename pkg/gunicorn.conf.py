# gunicorn.conf.py
import os

# Server socket
bind = f"0.0.0.0:{os.getenv('PORT', 8000)}"
backlog = 256

# Worker processes; scans are CPU bound, so one worker per core at most
workers = int(os.getenv('WORKERS', 1))
worker_class = 'sync'
timeout = int(os.getenv('GUNICORN_TIMEOUT', 600))  # full 81-point scans and verify runs
keepalive = 5
graceful_timeout = 30

max_requests = 500
max_requests_jitter = 50

# Logging
accesslog = '-'
errorlog = '-'
loglevel = 'info'

proc_name = 'spin-decoherence-simulator'

preload_app = True
daemon = False

raw_env = [
    'PYTHONUNBUFFERED=1',
]


def when_ready(server):
    server.log.info("Simulation service is ready to accept connections")


def post_fork(server, worker):
    server.log.info("Worker spawned (pid: %s)", worker.pid)
