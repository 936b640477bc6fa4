from .data import Dataset, load_idx, load_mnist, make_gaussian_clusters, partition_iid, write_idx
from .model import ModelState, accuracy, cross_entropy_loss, local_gradient, loss_gradient
from .training import (
    FederatedTrainer,
    Federation,
    RoundMetrics,
    TrainingConfig,
    global_loss,
    run_training,
)
