"""
tcadloop: LLM-driven TCAD deck generation and closed-loop device optimization
for stacked nanosheet FETs, with an analytic surrogate backend for offline use.
"""

__version__ = "0.1.0"
