"""processlens: value-added analysis of business processes.

Parses BPMN 2.0 models, breaks activities into atomic steps and classifies
each step as value adding (VA), business value adding (BVA), or non value
adding (NVA) via configurable LLM prompts, evaluates results against gold
annotations, and tunes prompt configurations by greedy coordinate search.
"""

__version__ = "0.1.0"

from . import errors

__all__ = ["errors", "__version__"]
