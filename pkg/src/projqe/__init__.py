"""projqe: a compiler and verification workbench for quantified
multi-homogeneous formulas over products of complex projective spaces.

The package turns a quantified formula into a quantifier-free join formula
Theta plus a serializable polynomial map F with
Q_{R(Phi)} = F(Q_{R(Theta)}), and ships an exact combinatorial homology
oracle on the coordinate fragment to validate every transformation.
"""

__version__ = "0.1.0"
