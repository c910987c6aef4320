"""
Configuration and constants for the GAN-augmented Transformer threat hunter.
"""

# Edge-IIoT task
FEATURE_DIM = 95  # encoded model inputs
NUM_CLASSES = 15
EDGE_IIOT_CLASSES = (
    "Normal",
    "Backdoor",
    "Vulnerability_scanner",
    "DDoS_ICMP",
    "Password",
    "Port_Scanning",
    "DDoS_UDP",
    "Uploading",
    "DDoS_HTTP",
    "SQL_injection",
    "Ransomware",
    "DDoS_TCP",
    "XSS",
    "MITM",
    "Fingerprinting",
)
LABEL_COLUMN = "Attack_type"
MISSING_SENTINELS = ("", "nan", "NaN", "NAN")

# Identifier-like and leakage-prone columns of the published ML CSV.
# Together with ONEHOT_COLUMNS this is the calibration that yields FEATURE_DIM inputs.
DROP_COLUMNS = (
    "frame.time",
    "ip.src_host",
    "ip.dst_host",
    "arp.src.proto_ipv4",
    "arp.dst.proto_ipv4",
    "http.file_data",
    "http.request.full_uri",
    "icmp.transmit_timestamp",
    "http.request.uri.query",
    "tcp.options",
    "tcp.payload",
    "tcp.srcport",
    "tcp.dstport",
    "udp.port",
    "mqtt.msg",
    "Attack_label",  # binary attack flag, a copy of the target
)
ONEHOT_COLUMNS = (
    "http.request.method",
    "http.referer",
    "http.request.version",
    "dns.qry.name.len",
    "mqtt.conack.flags",
    "mqtt.protoname",
    "mqtt.topic",
)
UNSEEN_CODE = -1

# Split settings
TEST_FRACTION = 0.2  # inferred from the 441,371-row test support
STRATIFIED = True
SUBSAMPLE_FRACTION = 1.0
SEED = 42

# Transformer settings
HEAD_SIZE = 64
NUM_HEADS = 4
FILTERS = 64
NUM_BLOCKS = 2
DROPOUT = 0.1
MLP_UNITS = (64,)
MLP_DROPOUT = 0.1
LEARNING_RATE = 1e-3
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
BATCH_SIZE = 256
EPOCHS = 10
CHANNELS = 1
LAYER_NORM_EPS = 1e-6
POOLING = "positions"
PROB_CLAMP = 1e-12

# GAN settings
GAN_LATENT_DIM = 32
GAN_GEN_HIDDEN = (64, 64)
GAN_DISC_HIDDEN = (64, 32)
GAN_LEARNING_RATE = 1e-3
GAN_BETA1 = 0.5
GAN_LEAKY_SLOPE = 0.2
GAN_STEPS = 2000
GAN_BATCH_SIZE = 64
GAN_MIN_ROWS = 50
GAN_WORKERS = 1
GAN_LOG_EVERY = 500
GAN_EMA_DECAY = 0.99
GAN_PROB_CLIP = 1e-7
AUGMENT_TARGETS = "Fingerprinting=5x,Port_Scanning=5x,MITM=5x"

# Gradient checks
GRADCHECK_STEP = 1e-5
GRADCHECK_LAYER_TOL = 1e-4
GRADCHECK_MODEL_TOL = 1e-3
GRADCHECK_FLOOR = 1e-5  # denominator floor for relative error

# Default artifact paths
RAW_CSV = "data/ML-EdgeIIoT-dataset.csv"
BUNDLE_DIR = "artifacts/bundle"
AUGMENTED_DIR = "artifacts/bundle_augmented"
CHECKPOINT = "artifacts/model.json"
REPORT_DIR = "artifacts/report"
HISTORY_CSV = "artifacts/history.csv"
BASELINE_CHECKPOINT = ""  # empty: no baseline comparison
ENV_PREFIX = "THREAT_HUNTER_"

# File format tags
CHECKPOINT_FORMAT = "gan-threat-hunter/checkpoint"
CHECKPOINT_VERSION = 1
BUNDLE_FORMAT = "gan-threat-hunter/bundle"
BUNDLE_VERSION = 1
REPORT_FORMAT = "gan-threat-hunter/report"
REPORT_VERSION = 1
PROVENANCE_FORMAT = "gan-threat-hunter/provenance"
PROVENANCE_VERSION = 1
HISTORY_COLUMNS = ("epoch", "train_loss", "train_acc", "test_loss", "test_acc")

# Rendering (RGB)
CELL_SIZE = 36  # pixels per confusion-matrix cell
LABEL_MARGIN = 150
COLOR_HEAT_LOW = (240, 240, 245)
COLOR_HEAT_HIGH = (67, 97, 238)
COLOR_GRID_LINE = (200, 200, 200)
COLOR_TRAIN = (67, 97, 238)
COLOR_TEST = (255, 152, 0)
CURVE_SIZE = (480, 320)
