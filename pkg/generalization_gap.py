from src.quantum_utils.configuration import ExperimentConfig
from src.services.experiment_service import ExperimentService

config = ExperimentConfig.load("configs/generalization_gap.yml")

experiment = ExperimentService(config=config)
experiment.load_data()

rows = experiment.gen_gap(out="results/generalization_gap.csv")

for row in rows:
    if row["seed"] == "mean" or row["p"] == "gfqk":
        print(f"N={row['N']:<3} p={row['p']:<5} train risk={row['train_risk']:.3f} "
              f"test risk={row['test_risk']:.3f} gap={row['gap']:.3f}")
