"""Reference external scorer for the line-delimited scorer protocol."""

__version__ = "0.1.0"

from .model import ModelConfig, TinyCausalLM
from .server import serve_socket, serve_streams

__all__ = ["ModelConfig", "TinyCausalLM", "serve_socket", "serve_streams", "__version__"]
