"""
prenetctl core: tensor autograd, networks, objectives, training and data
"""
