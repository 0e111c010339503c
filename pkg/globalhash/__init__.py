"""Binary codes for nearest neighbor search from distances to trained satellites."""

from globalhash.codes import CodeMatrix
from globalhash.constellation import Constellation, encode
from globalhash.dependent import TrainConfigDD, train_dd
from globalhash.evaluation import EvalReport, evaluate
from globalhash.independent import TrainConfigDI, train_di
from globalhash.modelfile import HashingModel, read_model, write_model

__version__ = "0.1.0"
