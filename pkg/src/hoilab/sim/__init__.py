"""Rigid-body world: articulated hand proxy, one free object, contacts."""
from .model import (Joint, HandModel, ObjectModel, WorldConfig, HandState, ObjectState,
                    Scene, SceneError, Grasp, object_state_from_pose)
from .kinematics import FKResult, forward_kinematics
from .collision import sdf, detect_contacts
from .world import World, SimulationFault, forward_dynamics, inverse_dynamics

__all__ = ["Joint", "HandModel", "ObjectModel", "WorldConfig", "HandState", "ObjectState",
           "Scene", "SceneError", "Grasp", "object_state_from_pose", "FKResult", "forward_kinematics",
           "sdf", "detect_contacts", "World", "SimulationFault", "forward_dynamics",
           "inverse_dynamics"]
