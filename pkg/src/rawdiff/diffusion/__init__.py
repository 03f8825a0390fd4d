from .guidance import GuidanceConfig, cfg_dual, cfg_single
from .model import DEFAULT_PROMPT, NULL_PROMPT, PROMPTS, ArchConfig, DiffusionModel
from .sampling import sample, sample_batch
from .schedule import NoiseSchedule, forward_diffuse, reverse_chain
from .train import PairDataset, TrainConfig, TrainResult, train, training_loss, validation_loss
