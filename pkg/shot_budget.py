from src.measurement.shot_noise import BudgetQuery, shot_budget
from src.quantum_utils.configuration import DefaultValues
from src.services.experiment_service import ExperimentService

n = DefaultValues.BudgetQubits
bodies = DefaultValues.BudgetBodies
epsilon = DefaultValues.BudgetEpsilon

ExperimentService().shots(n=n,
                          bodies=bodies,
                          epsilon=epsilon,
                          n_max=DefaultValues.BudgetMaxN,
                          out="results/shot_budget.csv")

for H in bodies:
    record = shot_budget(BudgetQuery(n=n, N=1, H=H, epsilon=epsilon))
    print(f"H={H}: d_H={record.details['d_H']}, {record.details['shots_per_point']} snapshots per point, "
          f"LPQK cheaper than GFQK from N={record.crossover_N}")
