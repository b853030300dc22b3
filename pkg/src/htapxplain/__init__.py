"""Natural-language explanations for TP/AP performance gaps in dual-engine databases.

The package is organized as a pipeline: `plans` parses engine-specific
EXPLAIN trees, `router` embeds plan pairs and predicts the faster engine,
`kb` retrieves similar cases from a knowledge base of expert explanations,
`prompts` assembles the LLM prompt, and `pipeline` ties the loop together
with expert review feeding corrections back into the knowledge base.
`service` and `cli` expose the loop over HTTP and the command line.
"""

__version__ = "0.1.0"
