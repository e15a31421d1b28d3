"""Bridge pretrained vision-language encoders to the embedding-bank format."""

from .encoders import CLIP_CHECKPOINTS, ClipEncoder, DctEncoder, EncoderSpec, resolve_encoder
from .formats import ExportError, write_bank, write_manifest_fragment, write_prompt_sidecar
from .pipeline import embed_images, embed_prompts, extract_frames, frame_filename

__version__ = "0.1.0"
