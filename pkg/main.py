"""
MVSMamba - Command-Line Entry Point
Multi-view stereo depth estimation with reference-centered dynamic Mamba scanning
"""

from mvsmamba.__main__ import main

if __name__ == '__main__':
    main()
