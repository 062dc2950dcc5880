"""
🤖 Skill Tools
Wrist-trajectory lifting, action chunking, grasp selection and a kinematic
kitchen for distilling manipulation skills from egocentric video outputs.
"""
