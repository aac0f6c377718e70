"""
Compact Transformer language models for n-best rescoring
"""
