import './style.css';
import { mountApp } from './app';

mountApp();
