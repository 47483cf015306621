"""Render the stack WFA of the built-in example PDA on input 0110 (DOT on stdout, PNG if graphviz is present)."""
import shutil
import subprocess
import sys

from nsrnn.ns_stack import pda_snapshot
from nsrnn.wpda import example_pda

dot = pda_snapshot(example_pda(), sys.argv[1] if len(sys.argv) > 1 else "0110").to_dot()
sys.stdout.write(dot)
if shutil.which("dot"):
    subprocess.run(["dot", "-Tpng", "-o", "stack-wfa.png"], input=dot, text=True, check=True)
