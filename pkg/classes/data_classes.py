from classes.errors import ConfigError

from utils.checks import is_power_of_two

import config

class ReturnData:
    """
    Data class for returning data from command functions

    :type response: bool
    :type message: str

    :param response: True if successful, False if not
    :param message: Message to be returned
    :param data: optional payload (report rows, paths ...)
    """
    def __init__(self, response: bool, message: str, data=None):
        self.response = response
        self.message = message
        self.data = data

class MdtaConfig:
    """
    Channel attention settings
    :param channels: feature channels C
    :param heads: attention heads, must divide C
    :param temperature_init: initial per-head temperature
    """
    def __init__(self, channels: int, heads: int, temperature_init: float = 1.0):
        self.channels = channels
        self.heads = heads
        self.temperature_init = temperature_init

        if channels < 1 or heads < 1 or channels % heads:
            raise ConfigError(f'MDTA channels ({channels}) must be a positive multiple of heads ({heads})')

class GdfnConfig:
    """
    Gated feed-forward settings
    :param channels: feature channels C
    :param expansion: hidden width factor
    """
    def __init__(self, channels: int, expansion: float = 2.66):
        self.channels = channels
        self.expansion = expansion

        if self.hidden < 1:
            raise ConfigError(f'GDFN hidden width must be >= 1 (channels={channels}, expansion={expansion})')

    @property
    def hidden(self) -> int:
        return int(round(self.channels * self.expansion))

class MstConfig:
    """
    Mamba-style transformer block settings
    :param channels: feature channels C
    :param heads: attention heads
    :param expansion: GDFN expansion
    """
    def __init__(self, channels: int, heads: int, expansion: float = 2.66):
        self.channels = channels
        self.heads = heads
        self.mdta = MdtaConfig(channels, heads)
        self.gdfn = GdfnConfig(channels, expansion)

class AdecConfig:
    """
    Settings of one expert-collaboration module
    :param channels: feature channels C
    :param heads: heads of the fusion MST and of the cross attention
    :param experts: N specialized experts
    :param top_k: K experts selected per pixel
    :param prior_dim: d_f + d_s
    :param prior_tokens: tokens made from the prior vector
    :param expansion: GDFN expansion of the fusion MST
    :param shared_expert: mix in the always-on shared expert
    :param residual: return xhat + CA(...) instead of CA(...)
    """
    def __init__(self, channels: int, heads: int, experts: int, top_k: int, prior_dim: int,
                 prior_tokens: int = 4, expansion: float = 2.66,
                 shared_expert: bool = True, residual: bool = False):
        if not 1 <= top_k <= experts:
            raise ConfigError(f'top_k ({top_k}) must lie in 1..experts ({experts})')
        self.channels = channels
        self.heads = heads
        self.experts = experts
        self.top_k = top_k
        self.prior_dim = prior_dim
        self.prior_tokens = prior_tokens
        self.shared_expert = shared_expert
        self.residual = residual
        self.mst = MstConfig(channels, heads, expansion)

class PriorProviderConfig:
    """
    Degradation prior provider settings
    :param json_data: dict of overrides
    """
    def __init__(self, json_data: dict = None):
        json_data = json_data or {}

        self.mode: str = json_data.get('mode', 'oracle')  # oracle | learned
        self.d_f: int = json_data.get('d_f', 16)  # degradation feature width
        self.kinds: tuple = tuple(json_data.get('kinds', config.DEGRADATION_KINDS))  # descriptor order of the similarity vector
        self.seed: int = json_data.get('seed', 0)  # seed of the oracle embedding table

        if 'd_s' in json_data and json_data['d_s'] != len(self.kinds):
            raise ConfigError(f"prior d_s ({json_data['d_s']}) must equal the number of kinds ({len(self.kinds)})")

    @property
    def d_s(self) -> int:
        return len(self.kinds)

    def validate(self):
        if self.mode not in ('oracle', 'learned'):
            raise ConfigError(f'unknown prior mode: {self.mode}')
        if self.d_f < 1:
            raise ConfigError(f'prior d_f must be positive, got {self.d_f}')
        unknown = [kind for kind in self.kinds if kind not in config.DEGRADATION_KINDS]
        if unknown or not self.kinds:
            raise ConfigError(f'invalid prior kinds: {list(self.kinds)}')

    def to_dict(self) -> dict:
        return {'mode': self.mode, 'd_f': self.d_f, 'kinds': list(self.kinds), 'seed': self.seed}

class ModelConfig:
    """
    Network architecture hyperparameters
    :param json_data: dict of overrides (prior settings under the key 'prior')
    """
    def __init__(self, json_data: dict = None):
        json_data = json_data or {}

        self.base_channels: int = json_data.get('base_channels', 16)  # C of the first stage
        self.stages: int = json_data.get('stages', 4)  # encoder stages == decoder stages
        self.blocks_per_stage: list = list(json_data.get('blocks_per_stage', [1, 1, 1, 2]))  # MST blocks per stage
        self.heads_per_stage: list = list(json_data.get('heads_per_stage', [1, 2, 4, 8]))  # attention heads per stage
        self.experts: int = json_data.get('experts', 4)  # N specialized experts per ADEC
        self.top_k: int = json_data.get('top_k', 2)  # K experts selected per pixel
        self.expansion: float = json_data.get('expansion', 2.66)  # GDFN expansion
        self.prior_tokens: int = json_data.get('prior_tokens', 4)  # tokens W_p^1 makes from the prior vector
        self.block_type: str = json_data.get('block_type', 'mst')  # mst | transformer (MDTA + GDFN without the gated modulation)
        self.shared_expert: bool = json_data.get('shared_expert', True)  # always-on shared expert in every ADEC
        self.use_adec: bool = json_data.get('use_adec', True)  # expert collaboration between decoder stages
        self.adec_residual: bool = json_data.get('adec_residual', False)  # ADEC output xhat + CA(...) instead of CA(...)
        self.prior = PriorProviderConfig(json_data.get('prior', {}))

    def stage_channels(self, stage: int) -> int:
        return self.base_channels * 2 ** stage

    def stage_config(self, stage: int) -> MstConfig:
        return MstConfig(self.stage_channels(stage), self.heads_per_stage[stage], self.expansion)

    def adec_config(self, stage: int) -> AdecConfig:
        return AdecConfig(self.stage_channels(stage), self.heads_per_stage[stage], self.experts, self.top_k,
                          self.prior.d_f + self.prior.d_s, self.prior_tokens, self.expansion,
                          self.shared_expert, self.adec_residual)

    def validate(self):
        """
        Raises ConfigError on an inconsistent configuration
        :return: self
        """
        if self.stages != 4:
            raise ConfigError(f'the network has exactly 4 stages, got {self.stages}')
        if len(self.blocks_per_stage) != 4 or len(self.heads_per_stage) != 4:
            raise ConfigError('blocks_per_stage and heads_per_stage need 4 entries each')
        if any(b < 1 for b in self.blocks_per_stage):
            raise ConfigError(f'every stage needs at least one block: {self.blocks_per_stage}')
        if self.base_channels < 2 or self.base_channels % 2:
            raise ConfigError(f'base_channels must be even and >= 2, got {self.base_channels}')
        for stage in range(4):
            # raises on heads not dividing channels
            self.stage_config(stage)
        if not 1 <= self.top_k <= self.experts:
            raise ConfigError(f'top_k ({self.top_k}) must lie in 1..experts ({self.experts})')
        if self.prior_tokens < 1:
            raise ConfigError(f'prior_tokens must be positive, got {self.prior_tokens}')
        if self.block_type not in ('mst', 'transformer'):
            raise ConfigError(f'unknown block_type: {self.block_type}')
        self.prior.validate()
        return self

    def to_dict(self) -> dict:
        return {'base_channels': self.base_channels,
                'stages': self.stages,
                'blocks_per_stage': list(self.blocks_per_stage),
                'heads_per_stage': list(self.heads_per_stage),
                'experts': self.experts,
                'top_k': self.top_k,
                'expansion': self.expansion,
                'prior_tokens': self.prior_tokens,
                'block_type': self.block_type,
                'shared_expert': self.shared_expert,
                'use_adec': self.use_adec,
                'adec_residual': self.adec_residual,
                'prior': self.prior.to_dict()}

class LossWeights:
    """
    Weights and constants of the training objective
    :param json_data: dict of overrides
    """
    def __init__(self, json_data: dict = None):
        json_data = json_data or {}

        self.lambda1: float = json_data.get('lambda1', 0.01)  # load-balance weight
        self.lambda2: float = json_data.get('lambda2', 0.1)  # frequency loss weight
        self.charb_eps: float = json_data.get('charb_eps', 1e-3)  # Charbonnier epsilon
        self.balance_eps: float = json_data.get('balance_eps', 1e-8)  # balance denominator epsilon
        self.cv_squared: bool = json_data.get('cv_squared', False)  # sigma^2/mu^2 instead of sigma/mu^2

    def validate(self):
        for name in ('lambda1', 'lambda2', 'charb_eps', 'balance_eps'):
            if getattr(self, name) < 0:
                raise ConfigError(f'{name} must be nonnegative, got {getattr(self, name)}')
        return self

    def to_dict(self) -> dict:
        return {'lambda1': self.lambda1, 'lambda2': self.lambda2, 'charb_eps': self.charb_eps,
                'balance_eps': self.balance_eps, 'cv_squared': self.cv_squared}

class TrainConfig:
    """
    Optimisation and data settings
    :param json_data: dict of overrides (loss weights read from the same dict)
    """
    def __init__(self, json_data: dict = None):
        json_data = json_data or {}

        self.crop: int = json_data.get('crop', 64)  # training crop size (power of two)
        self.batch: int = json_data.get('batch', 4)  # images per step
        self.steps: int = json_data.get('steps', 2000)  # optimizer steps
        self.lr_init: float = json_data.get('lr_init', 2e-4)  # peak learning rate
        self.betas: tuple = tuple(json_data.get('betas', (0.9, 0.999)))  # AdamW betas
        self.eps: float = json_data.get('eps', 1e-8)  # AdamW epsilon
        self.weight_decay: float = json_data.get('weight_decay', 1e-4)  # decoupled weight decay
        self.warmup_steps: int = json_data.get('warmup_steps', 100)  # linear warmup length
        self.eta_min: float = json_data.get('eta_min', 1e-6)  # cosine floor
        self.augment_flip: bool = json_data.get('augment_flip', True)  # random horizontal/vertical flips
        self.augment_rotate: bool = json_data.get('augment_rotate', True)  # random 90 degree rotations
        self.seed: int = json_data.get('seed', config.DEFAULT_SEED)  # seed of init, crops and augmentation
        self.threads: int = json_data.get('threads', 1)  # worker threads for data and evaluation
        self.checkpoint_every: int = json_data.get('checkpoint_every', 500)  # steps between checkpoints
        self.prior_aux_weight: float = json_data.get('prior_aux_weight', 0.1)  # learned-prior cross-entropy weight
        self.manifest: str = json_data.get('manifest', None)  # training manifest path
        self.loss = LossWeights(json_data)

    def validate(self):
        if not is_power_of_two(self.crop):
            raise ConfigError(f'crop must be a power of two, got {self.crop}')
        if self.batch < 1 or self.steps < 1:
            raise ConfigError(f'batch and steps must be positive, got {self.batch}/{self.steps}')
        if self.warmup_steps < 0 or self.steps < self.warmup_steps:
            raise ConfigError(f'steps ({self.steps}) must be >= warmup_steps ({self.warmup_steps})')
        if len(self.betas) != 2 or not all(0 <= b < 1 for b in self.betas):
            raise ConfigError(f'invalid betas: {self.betas}')
        if self.threads < 1:
            raise ConfigError(f'threads must be positive, got {self.threads}')
        self.loss.validate()
        return self

    def to_dict(self) -> dict:
        data = {'crop': self.crop, 'batch': self.batch, 'steps': self.steps, 'lr_init': self.lr_init,
                'betas': list(self.betas), 'eps': self.eps, 'weight_decay': self.weight_decay,
                'warmup_steps': self.warmup_steps, 'eta_min': self.eta_min,
                'augment_flip': self.augment_flip, 'augment_rotate': self.augment_rotate,
                'seed': self.seed, 'threads': self.threads, 'checkpoint_every': self.checkpoint_every,
                'prior_aux_weight': self.prior_aux_weight, 'manifest': self.manifest}
        data.update(self.loss.to_dict())
        return data
