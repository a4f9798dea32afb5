# dl-circuits - compile ALCI ontologies to circuits for reasoning, sampling and neuro-symbolic learning
__version__ = "0.3.0"
