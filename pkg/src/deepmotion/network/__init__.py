from .model import (HiddenState, NetworkConfig, NonFiniteError, Prediction, forward,
                    gradients, init_params, loss)
from .optim import AdadeltaState, adadelta_step
from .train import TrainResult, train
