CHECKPOINT_MAGIC = b'FPSIMPV1'

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

ROUNDS_HEADER = ['round', 'accuracy', 'train_loss', 'selected',
                 'malicious_selected', 'malicious_admitted', 'defense_ms',
                 'attack_ms']

# Independent random streams, mixed with the master seed and the round index
STREAM_INIT = 0
STREAM_SELECT = 1
STREAM_ATTACK = 2
STREAM_CLIENT = 3
STREAM_ADVERSARY = 4
STREAM_DATA = 5

ATTACKS = ('none', 'dfa_r', 'dfa_g', 'lie', 'fang', 'minmax', 'minsum',
           'random', 'real_data')
DATA_FREE_ATTACKS = ('dfa_r', 'dfa_g')
DEFENSES = ('fedavg', 'krum', 'mkrum', 'bulyan', 'trmean', 'median', 'refd')
SELECTION_DEFENSES = ('krum', 'mkrum', 'bulyan', 'refd')
PERTURBATIONS = ('unit', 'sign', 'std')

WORKERS_ENV = 'FPSIM_WORKERS'

# Every key the experiment files understand, with its default. A key absent
# from this table is rejected.
DEFAULTS = {
    'experiment': {
        'name': 'experiment',
        'clients': 100,
        'per_round': 10,
        'rounds': 150,
        'attacker_fraction': 0.2,
        'seed': 1,
        'eval_interval': 1,
        'checkpoint_interval': 0,
    },
    'dataset': {
        'name': 'blobs',
        'classes': 10,
        'per_class': 100,
        'test_per_class': 50,
        'image_side': 8,
        'noise': 0.25,
        'train_images': '',
        'train_labels': '',
        'test_images': '',
        'test_labels': '',
        'subsample': 0.1,
        'beta': 0.5,
        'reference_size': 1000,
    },
    'model': {
        'hidden': [],
        'learning_rate': 0.1,
        'local_epochs': 1,
        'batch_size': 32,
        'init_scale': 0.01,
        'precision': 'float64',
    },
    'attack': {
        'kind': 'none',
        'samples': 50,
        'epochs': 5,
        'learning_rate': 0.1,
        'train_epochs': None,
        'reg_weight': 1.0,
        'static': False,
        'poison_label': None,
        'z_seed': 0,
        'filter_kernel': 3,
        'filter_stride': 1,
        'filter_padding': 0,
        'filter_input_size': None,
        'generator_noise_dim': 16,
        'generator_hidden': 64,
        'generator_activation': 'tanh',
        'lie_z': 1.5,
        'perturbation': 'unit',
        'fang_lambda': None,
    },
    'defense': {
        'kind': 'fedavg',
        'f': None,
        'assumed_fraction': None,
        'm': None,
        'k': None,
        'reject': None,
        'alpha': 1.0,
    },
    'metrics': {
        'wallclock': False,
    },
}

# Divergence threshold of the synthesis losses
DIVERGENCE_LOSS = 1e3
