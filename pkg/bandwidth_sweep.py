from src.quantum_utils.configuration import ExperimentConfig
from src.services.experiment_service import ExperimentService

config = ExperimentConfig.load("configs/bandwidth_sweep.yml")

experiment = ExperimentService(config=config)
experiment.load_data()

rows = experiment.sweep_bandwidth(out="results/bandwidth_sweep.csv")

for row in rows:
    print(f"bandwidth={row['bandwidth']:<5} p={row['p']:<5} "
          f"accuracy={row['mean_accuracy']:.3f} +- {row['stderr']:.3f}")
