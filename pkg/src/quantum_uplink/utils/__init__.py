"""Configuration, logging, IO and worker-pool helpers."""
