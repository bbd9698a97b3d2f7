#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
RDF namespace for candidate thesauri and exported diagnosis rankings.

see copyright/license in README.md
"""

import rdflib

CF: rdflib.Namespace = rdflib.Namespace("urn:cf-diagnosis:ns#")
