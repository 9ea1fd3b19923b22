"""Dual-stream neural video representation codec."""

from .video import SynthSpec, VideoTensor, load_video_dir, save_frames, synth_video
from .freqsplit import SpectralMask, build_mask, high_pass, low_pass
from .posenc import PosEncConfig, encode, gamma, normalize_index, split
from .models import ArchConfig, DualStreamModel, HNeRVModel, NeRVModel, count_params
from .budget import BudgetSolution, build_model, solve_budget, solve_budget_for_method
from .training import TrainConfig, TrainReport, evaluate, l2_loss, train
from .quant import QuantTensor, dequantize, quantize
from .huffman import huffman_decode, huffman_encode
from .bitstream import Bitstream, bpp, decode_video, deserialize, encode_video, serialize
from .metrics import RDPoint, aggregate_rd, ms_ssim, psnr, register_lpips

__version__ = "0.1.0"
