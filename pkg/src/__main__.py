"""Entry point for running src as a module."""

from src.experiment_job import main

if __name__ == "__main__":
    main()
