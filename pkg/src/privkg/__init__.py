"""Privacy-aware neural graph query engine.

Stores a knowledge graph with private attribute edges, answers complex
logical queries both symbolically and with neural encoders, tags answers as
publicly derivable or privacy-threatening, and trains encoders adversarially
to obfuscate the privacy-threatening ones.
"""

__version__ = "0.1.0"
