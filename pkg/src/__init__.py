"""
torus-ci-lab: 二维环面上的谱方法数值实验室

凸积分构造 (带时空白噪声的二维 Navier-Stokes) 的可执行版本
"""

__version__ = "0.4.0"
